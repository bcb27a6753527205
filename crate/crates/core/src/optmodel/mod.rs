//! Minimal optimization-problem representation shared by the battery
//! formulations and the solvers.
//!
//! A [`Problem`] is a table of bounded variables, a list of linear
//! constraints and a minimization objective whose quadratic part can only be
//! grown through [`Problem::add_sum_of_squares`], so every problem built here
//! is convex by construction.

mod expr;
mod text;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use expr::{Constraint, LinearExpr, Sense, VarRef};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("malformed variable `{name}`: bounds [{lower}, {upper}]")]
    MalformedVariable { name: String, lower: f64, upper: f64 },
    #[error("binary variable `{name}` has bounds [{lower}, {upper}] outside [0, 1]")]
    BinaryBounds { name: String, lower: f64, upper: f64 },
    #[error("variable handle {index} does not belong to this problem")]
    ForeignHandle { index: usize },
    #[error("non-finite coefficient in `{context}`")]
    NonFinite { context: String },
    #[error("name `{0}` contains whitespace")]
    BadName(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Integrality {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub integrality: Integrality,
}

impl Variable {
    pub fn continuous(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        Variable {
            name: name.into(),
            lower,
            upper,
            integrality: Integrality::Continuous,
        }
    }

    pub fn nonnegative(name: impl Into<String>) -> Self {
        Self::continuous(name, 0.0, f64::INFINITY)
    }

    pub fn free(name: impl Into<String>) -> Self {
        Self::continuous(name, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn binary(name: impl Into<String>) -> Self {
        Variable {
            name: name.into(),
            lower: 0.0,
            upper: 1.0,
            integrality: Integrality::Binary,
        }
    }

    pub fn is_binary(&self) -> bool {
        self.integrality == Integrality::Binary
    }

    fn validate(&self) -> Result<(), ModelError> {
        check_name(&self.name)?;
        let malformed = self.lower.is_nan()
            || self.upper.is_nan()
            || self.lower > self.upper
            || self.lower == f64::INFINITY
            || self.upper == f64::NEG_INFINITY;
        if malformed {
            return Err(ModelError::MalformedVariable {
                name: self.name.clone(),
                lower: self.lower,
                upper: self.upper,
            });
        }
        if self.is_binary() && (self.lower < 0.0 || self.upper > 1.0) {
            return Err(ModelError::BinaryBounds {
                name: self.name.clone(),
                lower: self.lower,
                upper: self.upper,
            });
        }
        Ok(())
    }
}

/// Minimization objective `Σ q·xᵢ·xⱼ + linear + constant`.
///
/// Quadratic triples are stored once per unordered pair with `i <= j`;
/// off-diagonal coefficients therefore carry both symmetric halves.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub linear: LinearExpr,
    pub quadratic: Vec<(VarRef, VarRef, f64)>,
}

impl Objective {
    pub fn evaluate(&self, values: &[f64]) -> f64 {
        let quad: f64 = self
            .quadratic
            .iter()
            .map(|&(a, b, c)| c * values[a.index] * values[b.index])
            .sum();
        quad + self.linear.evaluate(values)
    }

    pub fn is_quadratic(&self) -> bool {
        !self.quadratic.is_empty()
    }
}

static NEXT_PROBLEM_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    id: u64,
    variables: Vec<Variable>,
    constraints: Vec<Constraint>,
    objective: Objective,
}

impl Default for Problem {
    fn default() -> Self {
        Self::new()
    }
}

impl Problem {
    pub fn new() -> Self {
        Problem {
            id: NEXT_PROBLEM_ID.fetch_add(1, Ordering::Relaxed),
            variables: Vec::new(),
            constraints: Vec::new(),
            objective: Objective::default(),
        }
    }

    pub fn add_variable(&mut self, v: Variable) -> Result<VarRef, ModelError> {
        v.validate()?;
        self.variables.push(v);
        Ok(VarRef {
            problem: self.id,
            index: self.variables.len() - 1,
        })
    }

    /// Adds `c` after folding the expression constant into the right-hand
    /// side and normalizing its terms. Returns the row index.
    pub fn add_constraint(&mut self, c: Constraint) -> Result<usize, ModelError> {
        check_name(&c.name)?;
        self.check_expr(&c.expr, &c.name)?;
        if !c.rhs.is_finite() {
            return Err(ModelError::NonFinite { context: c.name });
        }
        let mut expr = c.expr.normalized();
        let rhs = c.rhs - expr.constant;
        expr.constant = 0.0;
        self.constraints.push(Constraint {
            name: c.name,
            expr,
            sense: c.sense,
            rhs,
        });
        Ok(self.constraints.len() - 1)
    }

    /// Adds `Σ exprᵢ²` to the objective.
    pub fn add_sum_of_squares(&mut self, exprs: &[LinearExpr]) -> Result<(), ModelError> {
        for e in exprs {
            self.check_expr(e, "sum-of-squares")?;
        }
        let mut quad: BTreeMap<(VarRef, VarRef), f64> = self
            .objective
            .quadratic
            .iter()
            .map(|&(a, b, c)| ((a, b), c))
            .collect();
        let mut linear = std::mem::take(&mut self.objective.linear);
        for e in exprs {
            let e = e.normalized();
            for (i, &(a, ca)) in e.terms.iter().enumerate() {
                *quad.entry((a, a)).or_insert(0.0) += ca * ca;
                for &(b, cb) in &e.terms[i + 1..] {
                    // Terms are sorted, so `a < b` here.
                    *quad.entry((a, b)).or_insert(0.0) += 2.0 * ca * cb;
                }
                linear.add_term(a, 2.0 * ca * e.constant);
            }
            linear.constant += e.constant * e.constant;
        }
        self.objective.linear = linear.normalized();
        self.objective.quadratic = quad
            .into_iter()
            .filter(|&(_, c)| c != 0.0)
            .map(|((a, b), c)| (a, b, c))
            .collect();
        Ok(())
    }

    /// Adds a linear expression to the objective.
    pub fn add_linear_objective(&mut self, expr: &LinearExpr) -> Result<(), ModelError> {
        self.check_expr(expr, "objective")?;
        let mut linear = std::mem::take(&mut self.objective.linear);
        linear += expr.clone();
        self.objective.linear = linear.normalized();
        Ok(())
    }

    fn check_expr(&self, e: &LinearExpr, context: &str) -> Result<(), ModelError> {
        if !e.is_finite() {
            return Err(ModelError::NonFinite {
                context: context.to_string(),
            });
        }
        for &(v, _) in &e.terms {
            self.check_handle(v)?;
        }
        Ok(())
    }

    pub(crate) fn check_handle(&self, v: VarRef) -> Result<(), ModelError> {
        if v.problem != self.id || v.index >= self.variables.len() {
            return Err(ModelError::ForeignHandle { index: v.index });
        }
        Ok(())
    }

    /// Handle for the variable at `index`.
    pub fn var_ref(&self, index: usize) -> VarRef {
        assert!(index < self.variables.len(), "variable index out of range");
        VarRef {
            problem: self.id,
            index,
        }
    }

    pub fn variable(&self, v: VarRef) -> &Variable {
        &self.variables[v.index]
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.variables.iter().filter(|v| v.is_binary()).count()
    }

    pub fn is_mip(&self) -> bool {
        self.variables.iter().any(Variable::is_binary)
    }

    pub fn evaluate_objective(&self, values: &[f64]) -> f64 {
        self.objective.evaluate(values)
    }

    /// Largest bound or constraint violation at `values`.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let bounds = self
            .variables
            .iter()
            .zip(values)
            .map(|(v, &x)| (v.lower - x).max(x - v.upper).max(0.0))
            .fold(0.0, f64::max);
        self.constraints
            .iter()
            .map(|c| c.violation(values))
            .fold(bounds, f64::max)
    }

    /// Copy of the problem with every binary turned into a continuous
    /// variable over its bounds.
    pub fn relaxed(&self) -> Problem {
        let mut p = self.clone();
        for v in &mut p.variables {
            v.integrality = Integrality::Continuous;
        }
        p
    }

    /// Copy of the problem with different bounds on one variable.
    pub fn with_bounds(&self, v: VarRef, lower: f64, upper: f64) -> Result<Problem, ModelError> {
        self.check_handle(v)?;
        let mut p = self.clone();
        let var = &mut p.variables[v.index];
        var.lower = lower;
        var.upper = upper;
        var.validate()?;
        Ok(p)
    }
}

fn check_name(name: &str) -> Result<(), ModelError> {
    if name.chars().any(char::is_whitespace) {
        return Err(ModelError::BadName(name.to_string()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_variable_gets_index_zero() {
        let mut p = Problem::new();
        let x = p.add_variable(Variable::continuous("x", 0.0, 0.8)).unwrap();
        assert_eq!(x.index(), 0);
        assert_eq!(p.num_vars(), 1);
    }

    #[test]
    fn binary_records_unit_bounds() {
        let mut p = Problem::new();
        let z = p.add_variable(Variable::binary("z")).unwrap();
        let v = p.variable(z);
        assert_eq!((v.lower, v.upper), (0.0, 1.0));
        assert!(v.is_binary());
    }

    #[test]
    fn inverted_bounds_are_rejected() {
        let mut p = Problem::new();
        let err = p
            .add_variable(Variable::continuous("x", 1.0, 0.0))
            .unwrap_err();
        assert!(matches!(err, ModelError::MalformedVariable { .. }));
        assert_eq!(p.num_vars(), 0);
    }

    #[test]
    fn binary_outside_unit_box_is_rejected() {
        let mut p = Problem::new();
        let mut v = Variable::binary("z");
        v.upper = 2.0;
        assert!(matches!(
            p.add_variable(v),
            Err(ModelError::BinaryBounds { .. })
        ));
    }

    #[test]
    fn square_of_shifted_variable() {
        let mut p = Problem::new();
        let x = p.add_variable(Variable::free("x")).unwrap();
        p.add_sum_of_squares(&[LinearExpr::from(x) - 3.0]).unwrap();
        let obj = p.objective();
        assert_eq!(obj.quadratic, vec![(x, x, 1.0)]);
        assert_eq!(obj.linear.terms, vec![(x, -6.0)]);
        assert_eq!(obj.linear.constant, 9.0);
    }

    #[test]
    fn empty_sum_of_squares_is_a_no_op() {
        let mut p = Problem::new();
        let x = p.add_variable(Variable::free("x")).unwrap();
        p.add_linear_objective(&LinearExpr::term(x, 2.0)).unwrap();
        let before = p.objective().clone();
        p.add_sum_of_squares(&[]).unwrap();
        assert_eq!(p.objective(), &before);
    }

    #[test]
    fn square_of_sum_has_doubled_cross_term() {
        let mut p = Problem::new();
        let x = p.add_variable(Variable::free("x")).unwrap();
        let y = p.add_variable(Variable::free("y")).unwrap();
        p.add_sum_of_squares(&[LinearExpr::from(x) + LinearExpr::from(y)])
            .unwrap();
        assert_eq!(
            p.objective().quadratic,
            vec![(x, x, 1.0), (x, y, 2.0), (y, y, 1.0)]
        );
        assert!(p.objective().linear.terms.is_empty());
    }

    #[test]
    fn foreign_handles_are_rejected() {
        let mut p = Problem::new();
        let mut q = Problem::new();
        let x = q.add_variable(Variable::free("x")).unwrap();
        p.add_variable(Variable::free("y")).unwrap();
        assert_eq!(
            p.add_sum_of_squares(&[LinearExpr::from(x)]),
            Err(ModelError::ForeignHandle { index: 0 })
        );
        assert!(p
            .add_constraint(Constraint::le("c", LinearExpr::from(x), 1.0))
            .is_err());
    }

    #[test]
    fn constraint_constant_moves_to_rhs() {
        let mut p = Problem::new();
        let x = p.add_variable(Variable::free("x")).unwrap();
        let e = LinearExpr::from(x) + LinearExpr::term(x, 1.0) + 2.0;
        p.add_constraint(Constraint::le("c", e, 5.0)).unwrap();
        let c = &p.constraints()[0];
        assert_eq!(c.expr.terms, vec![(x, 2.0)]);
        assert_eq!(c.rhs, 3.0);
        assert_eq!(c.expr.constant, 0.0);
    }

    #[test]
    fn non_finite_rhs_is_rejected() {
        let mut p = Problem::new();
        let x = p.add_variable(Variable::free("x")).unwrap();
        let c = Constraint::le("c", LinearExpr::from(x), f64::INFINITY);
        assert!(matches!(
            p.add_constraint(c),
            Err(ModelError::NonFinite { .. })
        ));
    }
}
