use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One block of a piecewise-linear curve: `width` units at `price` per unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub width: f64,
    pub price: f64,
}

/// Convex, non-decreasing, piecewise-linear money-vs-inertia curve with
/// `c(0) = 0`, capped at the sum of segment widths.
#[derive(Debug, Clone, PartialEq)]
pub struct CostCurve {
    segments: Vec<Segment>,
}

impl CostCurve {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidCurve("curve has no segments".into()));
        }
        for (i, s) in segments.iter().enumerate() {
            if !(s.width > 0.0 && s.width.is_finite()) {
                return Err(Error::InvalidCurve(format!(
                    "segment {} has non-positive width {}",
                    i + 1,
                    s.width
                )));
            }
            if !(s.price >= 0.0 && s.price.is_finite()) {
                return Err(Error::InvalidCurve(format!(
                    "segment {} has negative price {}",
                    i + 1,
                    s.price
                )));
            }
        }
        if let Some(i) = segments.windows(2).position(|w| w[1].price < w[0].price) {
            return Err(Error::InvalidCurve(format!(
                "marginal price decreases from {} to {} at segment {} (curve must be convex)",
                segments[i].price,
                segments[i + 1].price,
                i + 2
            )));
        }
        Ok(CostCurve { segments })
    }

    /// A single-segment curve `price·μ` on `[0, cap]`.
    pub fn linear(price: f64, cap: f64) -> Result<Self> {
        CostCurve::new(vec![Segment { width: cap, price }])
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn cap(&self) -> f64 {
        self.segments.iter().map(|s| s.width).sum()
    }

    /// Curve value at `q`; beyond the cap the last marginal price is extended.
    pub fn eval(&self, q: f64) -> f64 {
        let mut left = q.max(0.0);
        let mut total = 0.0;
        for s in &self.segments {
            let take = left.min(s.width);
            total += take * s.price;
            left -= take;
            if left <= 0.0 {
                return total;
            }
        }
        total + left * self.segments.last().map_or(0.0, |s| s.price)
    }

    /// Same widths, each marginal price multiplied by the matching factor and
    /// re-sorted so that the result stays convex.
    pub fn with_scaled_prices(&self, factors: &[f64]) -> Result<Self> {
        let mut prices: Vec<f64> = self
            .segments
            .iter()
            .zip(factors.iter().chain(std::iter::repeat(&1.0)))
            .map(|(s, f)| s.price * f)
            .collect();
        prices.sort_by(f64::total_cmp);
        CostCurve::new(
            self.segments
                .iter()
                .zip(prices)
                .map(|(s, price)| Segment {
                    width: s.width,
                    price,
                })
                .collect(),
        )
    }
}
