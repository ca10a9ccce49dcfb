use super::{Graph, NnError, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub pass: bool,
}

/// Central-difference gradient checker.
///
/// Relative error per coordinate is `|a − n| / max(|a|, |n|, floor)`; the
/// floor keeps coordinates whose true gradient is zero from dividing by
/// rounding noise.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub h: f64,
    pub tol: f64,
    pub floor: f64,
}

impl GradCheck {
    pub fn new(h: f64, tol: f64) -> Self {
        Self { h, tol, floor: 1e-8 }
    }

    /// Compares a supplied analytic gradient to central differences of `f`.
    pub fn compare<F>(&self, f: F, at: &Tensor, analytic: &Tensor) -> Result<GradCheckReport, NnError>
    where
        F: Fn(&Tensor) -> Result<f64, NnError>,
    {
        if analytic.len() != at.len() {
            return Err(NnError::Shape {
                op: "grad_check",
                detail: format!("gradient {:?} for point {:?}", analytic.shape(), at.shape()),
            });
        }
        let first = f(at)?;
        let second = f(at)?;
        if first.to_bits() != second.to_bits() {
            return Err(NnError::NonDeterministic { first, second });
        }
        let mut probe = at.clone();
        let mut worst = (0.0f64, 0usize);
        for i in 0..at.len() {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + self.h;
            let plus = f(&probe)?;
            probe.data_mut()[i] = orig - self.h;
            let minus = f(&probe)?;
            probe.data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * self.h);
            let a = analytic.data()[i];
            let denom = a.abs().max(numeric.abs()).max(self.floor);
            let rel = (a - numeric).abs() / denom;
            if rel > worst.0 {
                worst = (rel, i);
            }
        }
        Ok(GradCheckReport { max_rel_err: worst.0, worst_index: worst.1, pass: worst.0 < self.tol })
    }

    /// Checks a graph-built scalar function against its own backward pass.
    pub fn check<F>(&self, build: F, at: &Tensor) -> Result<GradCheckReport, NnError>
    where
        F: Fn(&mut Graph, Var) -> Result<Var, NnError>,
    {
        let mut g = Graph::new();
        let x = g.param(at.clone());
        let loss = build(&mut g, x)?;
        g.backward(loss)?;
        let analytic = g.grad(x).unwrap_or_else(|| Tensor::zeros(at.shape()));
        let value = |t: &Tensor| -> Result<f64, NnError> {
            let mut g = Graph::new();
            let x = g.constant(t.clone());
            let loss = build(&mut g, x)?;
            Ok(g.value(loss).item())
        };
        self.compare(value, at, &analytic)
    }
}
