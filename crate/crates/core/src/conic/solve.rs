//! Solver front end: lowers a [`ConicProblem`] to real cones and runs the
//! interior-point engine.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::DMatrix;

use super::param::{real_lift, svec};
use super::problem::{ConicProblem, Constraint, LinExpr};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    /// Absolute feasibility tolerance of the contract.
    pub tol_feas: f64,
    /// Relative duality-gap tolerance of the contract.
    pub tol_gap: f64,
    pub max_iter: u32,
    pub verbose: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol_feas: 1e-7,
            tol_gap: 1e-7,
            max_iter: 200,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalLimit,
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: SolveStatus,
    /// Stacked coordinates of all variables (meaningless unless `Optimal`).
    pub values: Vec<f64>,
    /// Sum of squared objective residuals at `values`.
    pub objective: f64,
    /// Lower bound on `objective` from the dual certificate.
    pub dual_bound: f64,
    /// Largest constraint violation, evaluated outside the engine.
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Relative gap between primal and dual epigraph values.
    pub gap: f64,
    pub iterations: u32,
    pub engine_status: String,
}

impl ConicSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn scalar(&self, problem: &ConicProblem, id: super::VarId) -> f64 {
        self.values[problem.index(id)]
    }

    pub fn hermitian(&self, problem: &ConicProblem, id: super::VarId) -> crate::linalg::CMat {
        let p = problem.param(id);
        let o = problem.offset(id);
        p.to_matrix(&self.values[o..o + p.len()])
    }
}

/// Rows of `A z + s = b` for one cone, in triplet form.
struct Lowering {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
}

impl Lowering {
    fn new() -> Self {
        Self {
            rows: Vec::new(),
            cols: Vec::new(),
            vals: Vec::new(),
            b: Vec::new(),
            cones: Vec::new(),
        }
    }

    /// Appends a row with slack `s = expr(z)`.
    fn push_slack_row(&mut self, e: &LinExpr) {
        let r = self.b.len();
        for &(j, a) in &e.terms {
            self.rows.push(r);
            self.cols.push(j);
            self.vals.push(-a);
        }
        self.b.push(e.constant);
    }

    fn push_cone(&mut self, cone: SupportedConeT<f64>) {
        use SupportedConeT::*;
        match (self.cones.last_mut(), &cone) {
            (Some(ZeroConeT(n)), ZeroConeT(k)) => *n += k,
            (Some(NonnegativeConeT(n)), NonnegativeConeT(k)) => *n += k,
            _ => self.cones.push(cone),
        }
    }
}

/// Replaces a tall residual block by an equivalent square one:
/// `‖A z + c‖ = ‖R [z; 1]‖` where `R` is the triangular factor of `[A c]`.
fn compress_residuals(residuals: &[LinExpr]) -> Vec<LinExpr> {
    let mut used: Vec<usize> = residuals.iter().flat_map(|e| e.terms.iter().map(|t| t.0)).collect();
    used.sort_unstable();
    used.dedup();
    let width = used.len() + 1;
    if residuals.len() <= width {
        return residuals.to_vec();
    }
    let col_of = |j: usize| used.binary_search(&j).expect("collected above");
    let mut dense = DMatrix::<f64>::zeros(residuals.len(), width);
    for (i, e) in residuals.iter().enumerate() {
        for &(j, a) in &e.terms {
            dense[(i, col_of(j))] += a;
        }
        dense[(i, width - 1)] = e.constant;
    }
    let r = dense.qr().r();
    (0..r.nrows())
        .map(|i| {
            let mut e = LinExpr::constant(r[(i, width - 1)]);
            for (k, &j) in used.iter().enumerate() {
                let a = r[(i, k)];
                if a != 0.0 {
                    e.terms.push((j, a));
                }
            }
            e
        })
        .collect()
}

/// Solves `problem`. Deterministic for fixed inputs and settings; runs
/// single-threaded.
pub fn solve(problem: &ConicProblem, settings: &SolverSettings) -> ConicSolution {
    if let Err(msg) = problem.validate() {
        panic!("malformed conic problem: {msg}");
    }
    let n = problem.num_coords();
    let mut low = Lowering::new();

    let mut q = vec![0.0; n];
    if let Some(obj) = problem.objective() {
        let t = problem.index(obj.epigraph);
        q[t] = 1.0;
        let compressed = compress_residuals(&obj.residuals);
        let head = LinExpr {
            terms: vec![(t, 1.0)],
            constant: 0.0,
        };
        low.push_slack_row(&head);
        for e in &compressed {
            low.push_slack_row(e);
        }
        low.push_cone(SupportedConeT::SecondOrderConeT(compressed.len() + 1));
    }
    if let Some(e) = problem.linear_objective() {
        for &(j, a) in &e.terms {
            q[j] += a;
        }
    }

    for lc in problem.constraints() {
        match &lc.constraint {
            Constraint::Eq(e) => {
                low.push_slack_row(e);
                low.push_cone(SupportedConeT::ZeroConeT(1));
            }
            Constraint::Ineq(e) => {
                low.push_slack_row(e);
                low.push_cone(SupportedConeT::NonnegativeConeT(1));
            }
            Constraint::Soc { head, tail } => {
                low.push_slack_row(head);
                for e in tail {
                    low.push_slack_row(e);
                }
                low.push_cone(SupportedConeT::SecondOrderConeT(tail.len() + 1));
            }
            Constraint::Psd(h) => {
                let r0 = low.b.len();
                low.b.extend(svec(&real_lift(&h.constant)));
                for (j, cm) in &h.terms {
                    for (r, v) in svec(&real_lift(cm)).into_iter().enumerate() {
                        if v != 0.0 {
                            low.rows.push(r0 + r);
                            low.cols.push(*j);
                            low.vals.push(-v);
                        }
                    }
                }
                low.push_cone(SupportedConeT::PSDTriangleConeT(2 * h.dim));
            }
        }
    }

    let m_rows = low.b.len();
    let a = CscMatrix::new_from_triplets(m_rows, n, low.rows, low.cols, low.vals);
    let p = CscMatrix::<f64>::zeros((n, n));
    let engine_settings = DefaultSettingsBuilder::default()
        .verbose(settings.verbose)
        .max_iter(settings.max_iter)
        .tol_feas(settings.tol_feas * 0.1)
        .tol_gap_abs(settings.tol_gap * 0.1)
        .tol_gap_rel(settings.tol_gap * 0.1)
        .max_threads(1)
        .build()
        .expect("valid solver settings");

    let mut engine = match DefaultSolver::new(&p, &q, &a, &low.b, &low.cones, engine_settings) {
        Ok(s) => s,
        Err(e) => {
            return ConicSolution {
                status: SolveStatus::NumericalLimit,
                values: vec![0.0; n],
                objective: f64::NAN,
                dual_bound: f64::NAN,
                primal_residual: f64::INFINITY,
                dual_residual: f64::INFINITY,
                gap: f64::INFINITY,
                iterations: 0,
                engine_status: format!("setup failed: {e:?}"),
            }
        }
    };
    engine.solve();
    let sol = &engine.solution;
    let values = sol.x.clone();
    let (primal_residual, _) = problem.max_violation(&values);
    let objective = problem.objective_value(&values);
    let dual_t = sol.obj_val_dual;
    let gap = (sol.obj_val - dual_t).abs() / sol.obj_val.abs().max(1.0);

    let status = match sol.status {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::AlmostSolved if primal_residual <= 10.0 * settings.tol_feas => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        _ => SolveStatus::NumericalLimit,
    };

    ConicSolution {
        status,
        values,
        objective,
        dual_bound: dual_t.max(0.0).powi(2),
        primal_residual,
        dual_residual: sol.r_dual,
        gap,
        iterations: sol.iterations,
        engine_status: format!("{:?}", sol.status),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::problem::HermExpr;
    use crate::linalg::{c, CMat};

    #[test]
    fn minimal_norm_epigraph() {
        let mut p = ConicProblem::new();
        let z = p.scalar("z");
        let t = p.scalar("t");
        let zi = p.index(z);
        p.set_objective(
            t,
            vec![LinExpr {
                terms: vec![(zi, 1.0)],
                constant: 0.0,
            }],
        );
        let s = solve(&p, &SolverSettings::default());
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!(s.scalar(&p, t).abs() < 1e-6);
        assert!(s.scalar(&p, z).abs() < 1e-6);
    }

    #[test]
    fn psd_feasibility_with_fixed_diagonal() {
        let m = 3;
        let mut p = ConicProblem::new();
        let r = p.hermitian("R", m);
        let o = p.offset(r);
        let mut psd = HermExpr::zero(m);
        psd.add_mapped_block(o, m, 1.0, |b| b.clone());
        p.add("psd", Constraint::Psd(psd));
        for i in 0..m {
            p.add(
                format!("diag{i}"),
                Constraint::Eq(LinExpr {
                    terms: vec![(o + i, 1.0)],
                    constant: -1.0 / m as f64,
                }),
            );
        }
        let s = solve(&p, &SolverSettings::default());
        assert_eq!(s.status, SolveStatus::Optimal);
        let x = s.hermitian(&p, r);
        for i in 0..m {
            assert!((x[(i, i)].re - 1.0 / 3.0).abs() < 1e-7);
        }
        assert!(s.primal_residual < 1e-7);
    }

    #[test]
    fn detects_infeasible_lmi() {
        // X ⪰ 0 with X[0][0] = -1.
        let mut p = ConicProblem::new();
        let r = p.hermitian("X", 2);
        let o = p.offset(r);
        let mut psd = HermExpr::zero(2);
        psd.add_mapped_block(o, 2, 1.0, |b| b.clone());
        p.add("psd", Constraint::Psd(psd));
        p.add(
            "neg",
            Constraint::Eq(LinExpr {
                terms: vec![(o, 1.0)],
                constant: 1.0,
            }),
        );
        let s = solve(&p, &SolverSettings::default());
        assert_eq!(s.status, SolveStatus::Infeasible);
    }

    #[test]
    fn compression_preserves_norm() {
        let rows: Vec<LinExpr> = (0..50)
            .map(|i| LinExpr {
                terms: vec![(0, (i as f64).sin()), (2, (i as f64 * 0.3).cos())],
                constant: 0.1 * i as f64,
            })
            .collect();
        let small = compress_residuals(&rows);
        assert_eq!(small.len(), 3);
        for z in [[0.0, 5.0, 0.0], [1.0, 0.0, -2.0], [0.3, 0.0, 0.7]] {
            let a: f64 = rows.iter().map(|e| e.eval(&z).powi(2)).sum();
            let b: f64 = small.iter().map(|e| e.eval(&z).powi(2)).sum();
            assert!((a - b).abs() < 1e-9 * a.max(1.0));
        }
    }

    #[test]
    fn complex_offdiagonal_constraint() {
        // minimize ‖X − target‖ over PSD X with unit diagonal: target has
        // off-diagonal 2j, so the projection is the rank-one [[1, j],[−j, 1]].
        let mut p = ConicProblem::new();
        let x = p.hermitian("X", 2);
        let t = p.scalar("t");
        let o = p.offset(x);
        let mut psd = HermExpr::zero(2);
        psd.add_mapped_block(o, 2, 1.0, |b| b.clone());
        p.add("psd", Constraint::Psd(psd));
        for i in 0..2 {
            p.add(
                format!("d{i}"),
                Constraint::Eq(LinExpr {
                    terms: vec![(o + i, 1.0)],
                    constant: -1.0,
                }),
            );
        }
        // coordinates 2,3 are Re/Im of X[0][1]
        p.set_objective(
            t,
            vec![
                LinExpr {
                    terms: vec![(o + 2, 1.0)],
                    constant: 0.0,
                },
                LinExpr {
                    terms: vec![(o + 3, 1.0)],
                    constant: -2.0,
                },
            ],
        );
        let s = solve(&p, &SolverSettings::default());
        assert!(s.is_optimal());
        let xm = s.hermitian(&p, x);
        assert!((xm[(0, 1)] - c(0.0, 1.0)).norm() < 1e-6);
        assert!((xm - CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(1.0, 0.0)])).norm() < 1e-6);
        assert!((s.objective - 1.0).abs() < 1e-6);
    }
}
