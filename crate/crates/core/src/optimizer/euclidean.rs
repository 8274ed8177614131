use std::convert::Infallible;

use super::Problem;

/// Value and gradient of a function on ℝⁿ.
pub type ScalarFunction = Box<dyn Fn(&[f64]) -> (f64, Vec<f64>) + Send + Sync>;

/// Equality-constrained problem on ℝⁿ with the Euclidean inner product.
pub struct EuclideanProblem {
    objective: ScalarFunction,
    constraints: Vec<ScalarFunction>,
}

impl EuclideanProblem {
    pub fn new(objective: ScalarFunction, constraints: Vec<ScalarFunction>) -> Self {
        EuclideanProblem {
            objective,
            constraints,
        }
    }

    pub fn unconstrained(objective: ScalarFunction) -> Self {
        Self::new(objective, Vec::new())
    }
}

pub struct EuclideanEvaluation {
    value: f64,
    gradient: Vec<f64>,
    constraints: Vec<(f64, Vec<f64>)>,
}

impl EuclideanEvaluation {
    pub fn gradient(&self) -> &[f64] {
        &self.gradient
    }
}

impl Problem for EuclideanProblem {
    type Point = Vec<f64>;
    type Tangent = Vec<f64>;
    type Evaluation = EuclideanEvaluation;
    type Metric = ();
    type Error = Infallible;

    fn evaluate(&self, x: &Vec<f64>) -> Result<EuclideanEvaluation, Infallible> {
        let (value, gradient) = (self.objective)(x);
        Ok(EuclideanEvaluation {
            value,
            gradient,
            constraints: self.constraints.iter().map(|c| c(x)).collect(),
        })
    }

    fn objective(&self, e: &EuclideanEvaluation) -> f64 {
        e.value
    }

    fn constraints(&self, e: &EuclideanEvaluation) -> Vec<f64> {
        e.constraints.iter().map(|c| c.0).collect()
    }

    fn metric(&self, _x: &Vec<f64>) -> Result<(), Infallible> {
        Ok(())
    }

    fn gradient(
        &self,
        _: &(),
        e: &EuclideanEvaluation,
        lambda: &[f64],
        mu: f64,
    ) -> Result<Vec<f64>, Infallible> {
        let mut g = e.gradient.clone();
        for ((c, dc), l) in e.constraints.iter().zip(lambda) {
            for (gi, di) in g.iter_mut().zip(dc) {
                *gi += (l + mu * c) * di;
            }
        }
        Ok(g)
    }

    fn inner(&self, _: &(), u: &Vec<f64>, w: &Vec<f64>) -> f64 {
        u.iter().zip(w).map(|(a, b)| a * b).sum()
    }

    fn combine(&self, a: f64, u: &Vec<f64>, b: f64, w: &Vec<f64>) -> Vec<f64> {
        u.iter().zip(w).map(|(x, y)| a * x + b * y).collect()
    }

    fn retract(&self, x: &Vec<f64>, q: &Vec<f64>, t: f64) -> Result<Option<Vec<f64>>, Infallible> {
        Ok(Some(x.iter().zip(q).map(|(a, b)| a + t * b).collect()))
    }

    fn step_norm(&self, _x: &Vec<f64>, q: &Vec<f64>, t: f64) -> f64 {
        t.abs() * q.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}
