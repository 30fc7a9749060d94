//! LP-relaxation branch-and-bound kernel with a cut-callback contract and an
//! embedded bounded-variable simplex. Every MIP in this crate (clustering
//! assignment, route scheduling, the covering master problem) runs on it.

mod bnb;
mod simplex;

pub use bnb::{
    branch_and_cut, BnbCallbacks, BnbOptions, Budget, Cut, CutLogRow, NodeLog, SearchResult,
    SearchStatus, SeparationContext, Separator, CUT_VIOLATION_TOL, INTEGRALITY_TOL,
};
pub use simplex::{solve_lp, LpError, LpSolution, LpStatus, TOL_FEAS};

use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct VariableDef {
    pub lower: f64,
    pub upper: f64,
    pub objective: f64,
    pub integer: bool,
}

impl VariableDef {
    pub fn binary(objective: f64) -> Self {
        VariableDef {
            lower: 0.0,
            upper: 1.0,
            objective,
            integer: true,
        }
    }
    pub fn continuous(lower: f64, upper: f64, objective: f64) -> Self {
        VariableDef {
            lower,
            upper,
            objective,
            integer: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RowDef {
    /// Sparse coefficients, strictly ascending by variable index.
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl RowDef {
    pub fn new(mut coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> Self {
        coeffs.sort_unstable_by_key(|&(v, _)| v);
        coeffs.dedup_by(|a, b| {
            if a.0 == b.0 {
                b.1 += a.1;
                true
            } else {
                false
            }
        });
        coeffs.retain(|&(_, c)| c != 0.0);
        RowDef { coeffs, sense, rhs }
    }
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(v, c)| c * x[v]).sum()
    }
    pub fn satisfied(&self, x: &[f64], tol: f64) -> bool {
        let act = self.activity(x);
        match self.sense {
            Sense::Le => act <= self.rhs + tol,
            Sense::Ge => act >= self.rhs - tol,
            Sense::Eq => (act - self.rhs).abs() <= tol,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LinearModel {
    pub vars: Vec<VariableDef>,
    pub rows: Vec<RowDef>,
}

impl LinearModel {
    pub fn new() -> Self {
        Self::default()
    }
    pub fn add_var(&mut self, def: VariableDef) -> usize {
        self.vars.push(def);
        self.vars.len() - 1
    }
    pub fn add_row(&mut self, row: RowDef) -> usize {
        self.rows.push(row);
        self.rows.len() - 1
    }
    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.vars
            .iter()
            .zip(x)
            .map(|(v, xi)| v.objective * xi)
            .sum()
    }

    /// Consistency checks: finite bounds on integer variables, ordered bounds,
    /// in-range column indices.
    pub fn validate(&self) -> Result<(), String> {
        for (i, v) in self.vars.iter().enumerate() {
            if v.lower > v.upper {
                return Err(format!("var {i}: lower > upper"));
            }
            if v.integer && !(v.lower.is_finite() && v.upper.is_finite()) {
                return Err(format!("var {i}: integer variable needs finite bounds"));
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            for &(v, c) in &row.coeffs {
                if v >= self.vars.len() {
                    return Err(format!("row {r}: variable {v} out of range"));
                }
                if !c.is_finite() {
                    return Err(format!("row {r}: non-finite coefficient"));
                }
            }
            if !row.rhs.is_finite() {
                return Err(format!("row {r}: non-finite rhs"));
            }
        }
        Ok(())
    }

    /// Textual dump in an LP-format-like syntax for debugging.
    pub fn dump_lp(&self) -> String {
        let mut s = String::new();
        s.push_str("min:");
        for (i, v) in self.vars.iter().enumerate() {
            if v.objective != 0.0 {
                let _ = write!(s, " {:+} x{}", v.objective, i);
            }
        }
        s.push('\n');
        for (r, row) in self.rows.iter().enumerate() {
            let _ = write!(s, "r{r}:");
            for &(v, c) in &row.coeffs {
                let _ = write!(s, " {c:+} x{v}");
            }
            let op = match row.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            let _ = writeln!(s, " {op} {}", row.rhs);
        }
        for (i, v) in self.vars.iter().enumerate() {
            let _ = writeln!(
                s,
                "{} <= x{i} <= {}{}",
                v.lower,
                v.upper,
                if v.integer { " int" } else { "" }
            );
        }
        s
    }
}
