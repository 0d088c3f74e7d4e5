//! Intermediate representation of the conic programs built by the designers.

use std::fmt::Write as _;

use nalgebra::SymmetricEigen;

use super::param::{hermitian_param, HermitianParam};
use crate::linalg::{c, CMat};

/// Handle to a declared variable block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarId(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    /// Hermitian `M×M` matrix, `M²` real coordinates.
    Hermitian(usize),
    Scalar,
}

#[derive(Debug, Clone)]
pub struct VarBlock {
    pub name: String,
    pub kind: VarKind,
    pub offset: usize,
}

impl VarBlock {
    pub fn len(&self) -> usize {
        match self.kind {
            VarKind::Hermitian(m) => m * m,
            VarKind::Scalar => 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Real affine expression `Σ a_j z_j + c` over the stacked coordinates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(value: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: value,
        }
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, a)| a * z[j]).sum::<f64>() + self.constant
    }

    pub fn add_term(&mut self, idx: usize, coeff: f64) {
        if coeff != 0.0 {
            self.terms.push((idx, coeff));
        }
    }

    pub fn add_block(&mut self, offset: usize, coeffs: &[f64], scale: f64) {
        for (j, a) in coeffs.iter().enumerate() {
            self.add_term(offset + j, scale * a);
        }
    }

    /// Merges duplicate indices and drops zeros.
    pub fn compact(mut self) -> Self {
        self.terms.sort_by_key(|t| t.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for (j, a) in self.terms {
            match out.last_mut() {
                Some(last) if last.0 == j => last.1 += a,
                _ => out.push((j, a)),
            }
        }
        out.retain(|t| t.1 != 0.0);
        self.terms = out;
        self
    }
}

/// Hermitian-valued affine expression `Σ_j z_j·C_j + C_0`, each `C` of size `dim`.
#[derive(Debug, Clone)]
pub struct HermExpr {
    pub dim: usize,
    pub terms: Vec<(usize, CMat)>,
    pub constant: CMat,
}

impl HermExpr {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            terms: Vec::new(),
            constant: CMat::zeros(dim, dim),
        }
    }

    pub fn eval(&self, z: &[f64]) -> CMat {
        let mut out = self.constant.clone();
        for (j, cm) in &self.terms {
            out += cm * c(z[*j], 0.0);
        }
        out
    }

    /// Adds `scale·f(X)` where `X` is the Hermitian block at `offset` and `f`
    /// is a real-linear map from `m×m` Hermitian matrices to `dim×dim` ones.
    pub fn add_mapped_block<F>(&mut self, offset: usize, m: usize, scale: f64, f: F)
    where
        F: Fn(&CMat) -> CMat,
    {
        let p = hermitian_param(m);
        for j in 0..p.len() {
            let img = f(&p.basis(j)) * c(scale, 0.0);
            self.terms.push((offset + j, img));
        }
    }

    pub fn add_scalar_term(&mut self, idx: usize, cm: CMat) {
        self.terms.push((idx, cm));
    }
}

#[derive(Debug, Clone)]
pub enum Constraint {
    /// `expr = 0`.
    Eq(LinExpr),
    /// `expr ≥ 0`.
    Ineq(LinExpr),
    /// `expr ⪰ 0` (Hermitian).
    Psd(HermExpr),
    /// `head ≥ ‖tail‖₂`.
    Soc { head: LinExpr, tail: Vec<LinExpr> },
}

impl Constraint {
    pub fn kind(&self) -> &'static str {
        match self {
            Constraint::Eq(_) => "eq",
            Constraint::Ineq(_) => "ineq",
            Constraint::Psd(_) => "psd",
            Constraint::Soc { .. } => "soc",
        }
    }

    /// Violation amount (0 when satisfied), evaluated directly on the
    /// complex expression rather than through the real lift.
    pub fn violation(&self, z: &[f64]) -> f64 {
        match self {
            Constraint::Eq(e) => e.eval(z).abs(),
            Constraint::Ineq(e) => (-e.eval(z)).max(0.0),
            Constraint::Psd(h) => {
                let x = h.eval(z);
                let x = (&x + x.adjoint()) * c(0.5, 0.0);
                let min = SymmetricEigen::new(x).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
                (-min).max(0.0)
            }
            Constraint::Soc { head, tail } => {
                let t = head.eval(z);
                let n = tail.iter().map(|e| e.eval(z).powi(2)).sum::<f64>().sqrt();
                (n - t).max(0.0)
            }
        }
    }
}

/// Least-squares objective in epigraph form: minimize `t` subject to
/// `‖residuals(z)‖₂ ≤ t`. The optimal value of the quadratic objective is `t²`.
#[derive(Debug, Clone)]
pub struct Objective {
    pub epigraph: VarId,
    pub residuals: Vec<LinExpr>,
}

#[derive(Debug, Clone)]
pub struct LabeledConstraint {
    pub label: String,
    pub constraint: Constraint,
}

/// A convex conic program over Hermitian matrix and scalar variables.
#[derive(Debug, Clone)]
pub struct ConicProblem {
    blocks: Vec<VarBlock>,
    num_coords: usize,
    objective: Option<Objective>,
    linear: Option<LinExpr>,
    constraints: Vec<LabeledConstraint>,
}

impl Default for ConicProblem {
    fn default() -> Self {
        Self::new()
    }
}

impl ConicProblem {
    pub fn new() -> Self {
        Self {
            blocks: Vec::new(),
            num_coords: 0,
            objective: None,
            linear: None,
            constraints: Vec::new(),
        }
    }

    pub fn hermitian(&mut self, name: impl Into<String>, m: usize) -> VarId {
        self.declare(name.into(), VarKind::Hermitian(m))
    }

    pub fn scalar(&mut self, name: impl Into<String>) -> VarId {
        self.declare(name.into(), VarKind::Scalar)
    }

    fn declare(&mut self, name: String, kind: VarKind) -> VarId {
        let block = VarBlock {
            name,
            kind,
            offset: self.num_coords,
        };
        self.num_coords += block.len();
        self.blocks.push(block);
        VarId(self.blocks.len() - 1)
    }

    pub fn block(&self, id: VarId) -> &VarBlock {
        &self.blocks[id.0]
    }

    pub fn blocks(&self) -> &[VarBlock] {
        &self.blocks
    }

    pub fn offset(&self, id: VarId) -> usize {
        self.blocks[id.0].offset
    }

    /// Index of a scalar variable's single coordinate.
    pub fn index(&self, id: VarId) -> usize {
        debug_assert_eq!(self.blocks[id.0].kind, VarKind::Scalar);
        self.blocks[id.0].offset
    }

    pub fn param(&self, id: VarId) -> HermitianParam {
        match self.blocks[id.0].kind {
            VarKind::Hermitian(m) => hermitian_param(m),
            VarKind::Scalar => panic!("variable {} is scalar", self.blocks[id.0].name),
        }
    }

    pub fn num_coords(&self) -> usize {
        self.num_coords
    }

    pub fn find(&self, name: &str) -> Option<VarId> {
        self.blocks.iter().position(|b| b.name == name).map(VarId)
    }

    pub fn set_objective(&mut self, epigraph: VarId, residuals: Vec<LinExpr>) {
        self.objective = Some(Objective {
            epigraph,
            residuals,
        });
    }

    pub fn objective(&self) -> Option<&Objective> {
        self.objective.as_ref()
    }

    /// Linear term minimized alongside (or instead of) the least-squares one.
    pub fn set_linear_objective(&mut self, e: LinExpr) {
        self.linear = Some(e);
    }

    pub fn linear_objective(&self) -> Option<&LinExpr> {
        self.linear.as_ref()
    }

    pub fn clear_objective(&mut self) {
        self.objective = None;
        self.linear = None;
    }

    pub fn add(&mut self, label: impl Into<String>, constraint: Constraint) {
        self.constraints.push(LabeledConstraint {
            label: label.into(),
            constraint,
        });
    }

    pub fn constraints(&self) -> &[LabeledConstraint] {
        &self.constraints
    }

    pub fn constraints_mut(&mut self) -> &mut [LabeledConstraint] {
        &mut self.constraints
    }

    pub fn count(&self, kind: &str) -> usize {
        self.constraints.iter().filter(|c| c.constraint.kind() == kind).count()
    }

    pub fn count_labeled(&self, prefix: &str) -> usize {
        self.constraints.iter().filter(|c| c.label.starts_with(prefix)).count()
    }

    /// Every expression refers to declared coordinates and has consistent sizes.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.num_coords;
        let check = |e: &LinExpr, what: &str| -> Result<(), String> {
            match e.terms.iter().find(|t| t.0 >= n) {
                Some(t) => Err(format!("{what}: coordinate {} out of range ({n})", t.0)),
                None => Ok(()),
            }
        };
        for lc in &self.constraints {
            match &lc.constraint {
                Constraint::Eq(e) | Constraint::Ineq(e) => check(e, &lc.label)?,
                Constraint::Soc { head, tail } => {
                    check(head, &lc.label)?;
                    for e in tail {
                        check(e, &lc.label)?;
                    }
                }
                Constraint::Psd(h) => {
                    for (j, cm) in &h.terms {
                        if *j >= n {
                            return Err(format!("{}: coordinate {j} out of range", lc.label));
                        }
                        if cm.nrows() != h.dim || cm.ncols() != h.dim {
                            return Err(format!("{}: coefficient size mismatch", lc.label));
                        }
                    }
                }
            }
        }
        if let Some(obj) = &self.objective {
            if self.blocks[obj.epigraph.0].kind != VarKind::Scalar {
                return Err("epigraph variable must be scalar".into());
            }
            for e in &obj.residuals {
                check(e, "objective")?;
            }
        }
        if let Some(e) = &self.linear {
            check(e, "linear objective")?;
        }
        Ok(())
    }

    /// Largest violation over all constraints, with its label.
    pub fn max_violation(&self, z: &[f64]) -> (f64, Option<&str>) {
        let mut worst = (0.0, None);
        for lc in &self.constraints {
            let v = lc.constraint.violation(z);
            if v > worst.0 {
                worst = (v, Some(lc.label.as_str()));
            }
        }
        worst
    }

    /// Sum of squared residuals plus the linear term at `z`.
    pub fn objective_value(&self, z: &[f64]) -> f64 {
        let ls: f64 = self
            .objective
            .as_ref()
            .map(|o| o.residuals.iter().map(|e| e.eval(z).powi(2)).sum())
            .unwrap_or(0.0);
        ls + self.linear.as_ref().map_or(0.0, |e| e.eval(z))
    }

    /// Plain-text dump for offline cross-checking.
    ///
    /// ```text
    /// conic-problem v1
    /// var <name> hermitian <M> offset <o>     | var <name> scalar offset <o>
    /// objective epigraph <name> residuals <n>
    /// res <const> <idx>:<coef> ...
    /// linear <const> <idx>:<coef> ...
    /// con <label> eq|ineq <const> <idx>:<coef> ...
    /// con <label> soc <n>            followed by n+1 `row` lines (head first)
    /// con <label> psd <dim> <nterms> followed by `const` and `term <idx>` blocks,
    ///                                each a dim×dim list of `re,im` entries row-major
    /// ```
    pub fn dump(&self) -> String {
        fn lin(e: &LinExpr) -> String {
            let mut s = format!("{:e}", e.constant);
            for (j, a) in &e.terms {
                let _ = write!(s, " {j}:{a:e}");
            }
            s
        }
        fn mat(m: &CMat) -> String {
            m.transpose()
                .iter()
                .map(|z| format!("{:e},{:e}", z.re, z.im))
                .collect::<Vec<_>>()
                .join(" ")
        }
        let mut out = String::from("conic-problem v1\n");
        for b in &self.blocks {
            match b.kind {
                VarKind::Hermitian(m) => {
                    let _ = writeln!(out, "var {} hermitian {m} offset {}", b.name, b.offset);
                }
                VarKind::Scalar => {
                    let _ = writeln!(out, "var {} scalar offset {}", b.name, b.offset);
                }
            }
        }
        if let Some(o) = &self.objective {
            let _ = writeln!(
                out,
                "objective epigraph {} residuals {}",
                self.blocks[o.epigraph.0].name,
                o.residuals.len()
            );
            for e in &o.residuals {
                let _ = writeln!(out, "res {}", lin(e));
            }
        }
        if let Some(e) = &self.linear {
            let _ = writeln!(out, "linear {}", lin(e));
        }
        for lc in &self.constraints {
            match &lc.constraint {
                Constraint::Eq(e) => {
                    let _ = writeln!(out, "con {} eq {}", lc.label, lin(e));
                }
                Constraint::Ineq(e) => {
                    let _ = writeln!(out, "con {} ineq {}", lc.label, lin(e));
                }
                Constraint::Soc { head, tail } => {
                    let _ = writeln!(out, "con {} soc {}", lc.label, tail.len());
                    let _ = writeln!(out, "row {}", lin(head));
                    for e in tail {
                        let _ = writeln!(out, "row {}", lin(e));
                    }
                }
                Constraint::Psd(h) => {
                    let _ = writeln!(out, "con {} psd {} {}", lc.label, h.dim, h.terms.len());
                    let _ = writeln!(out, "const {}", mat(&h.constant));
                    for (j, cm) in &h.terms {
                        let _ = writeln!(out, "term {j} {}", mat(cm));
                    }
                }
            }
        }
        out
    }
}
