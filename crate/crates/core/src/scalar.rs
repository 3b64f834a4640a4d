//! Real functions of one variable supplied by users (`h`, drift, volatility).

use std::fmt;
use std::sync::Arc;

use crate::exprlang::{EvalError, Expr};

/// A shareable, fallible function `f64 -> f64`.
#[derive(Clone)]
pub struct ScalarFunction {
    inner: Arc<dyn Fn(f64) -> Result<f64, EvalError> + Send + Sync>,
    label: String,
}

impl ScalarFunction {
    pub fn new<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            inner: Arc::new(move |x| Ok(f(x))),
            label: label.into(),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("{c}"), move |_| c)
    }

    pub fn from_expr(expr: Expr) -> Self {
        let label = expr.to_string();
        Self {
            inner: Arc::new(move |x| expr.eval(x)),
            label,
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64, EvalError> {
        (self.inner)(x)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `self(g(x))`.
    pub fn compose(&self, g: ScalarFunction) -> Self {
        let outer = self.clone();
        let label = format!("{}∘{}", self.label, g.label);
        Self {
            inner: Arc::new(move |x| outer.eval(g.eval(x)?)),
            label,
        }
    }
}

impl fmt::Debug for ScalarFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("ScalarFunction").field(&self.label).finish()
    }
}
