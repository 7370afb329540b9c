//! Time-dependent coefficient schedules for generator terms.
//!
//! A schedule is either a constant or a list of polynomial pieces on
//! half-open intervals [start, end), ordered and non-overlapping. Pieces
//! are right-continuous: a breakpoint belongs to the piece that starts
//! there. The final endpoint of the last piece is closed so that
//! propagation up to the end of the schedule is well defined.
//!
//! Piece polynomials are evaluated in powers of (t - start), which keeps
//! coefficients well conditioned for pieces far from the origin.

use crate::error::{Error, Result};

/// One polynomial piece of a schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulePiece {
    /// Inclusive start of the piece.
    pub start: f64,
    /// Exclusive end of the piece (inclusive for the last piece).
    pub end: f64,
    /// Polynomial coefficients in powers of (t - start), constant first.
    pub coefficients: Vec<f64>,
}

impl SchedulePiece {
    fn value(&self, t: f64) -> f64 {
        let x = t - self.start;
        self.coefficients.iter().rev().fold(0.0, |acc, &a| acc * x + a)
    }

    /// Antiderivative evaluated at `t`, with the constant fixed at the
    /// piece start.
    fn antiderivative(&self, t: f64) -> f64 {
        let x = t - self.start;
        let mut acc = 0.0;
        for (k, &a) in self.coefficients.iter().enumerate().rev() {
            acc = acc * x + a / (k + 1) as f64;
        }
        acc * x
    }
}

/// Scalar coefficient of a generator term as a function of time.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeSchedule {
    /// The same value at every time.
    Constant(f64),
    /// Ordered, non-overlapping polynomial pieces.
    Piecewise(Vec<SchedulePiece>),
}

impl TimeSchedule {
    /// A constant schedule.
    pub fn constant(value: f64) -> Self {
        TimeSchedule::Constant(value)
    }

    /// Validates and builds a piecewise schedule. Pieces must be finite,
    /// have positive length, be sorted by start, and must not overlap.
    pub fn piecewise(pieces: Vec<SchedulePiece>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::InvalidInput { reason: "schedule needs at least one piece".into() });
        }
        for p in &pieces {
            if !p.start.is_finite() || !p.end.is_finite() || p.start >= p.end {
                return Err(Error::InvalidInput {
                    reason: format!("bad piece interval [{}, {})", p.start, p.end),
                });
            }
        }
        for w in pieces.windows(2) {
            if w[1].start < w[0].end {
                return Err(Error::InvalidInput {
                    reason: format!(
                        "pieces [{}, {}) and [{}, {}) overlap or are out of order",
                        w[0].start, w[0].end, w[1].start, w[1].end
                    ),
                });
            }
        }
        Ok(TimeSchedule::Piecewise(pieces))
    }

    /// The constant value when this schedule is constant everywhere it is
    /// defined (a plain constant, or piecewise with one coefficient shared
    /// by all pieces and no gaps in between).
    pub fn as_constant(&self) -> Option<f64> {
        match self {
            TimeSchedule::Constant(c) => Some(*c),
            TimeSchedule::Piecewise(pieces) => {
                let first = pieces[0].coefficients.first().copied().unwrap_or(0.0);
                let all_flat = pieces.iter().all(|p| {
                    p.coefficients.iter().skip(1).all(|&a| a == 0.0)
                        && p.coefficients.first().copied().unwrap_or(0.0) == first
                });
                let contiguous = pieces.windows(2).all(|w| w[0].end == w[1].start);
                (all_flat && contiguous).then_some(first)
            }
        }
    }

    fn piece_at(&self, t: f64) -> Result<&SchedulePiece> {
        let pieces = match self {
            TimeSchedule::Constant(_) => unreachable!("constant schedules have no pieces"),
            TimeSchedule::Piecewise(pieces) => pieces,
        };
        let last = pieces.len() - 1;
        for (i, p) in pieces.iter().enumerate() {
            if t >= p.start && (t < p.end || (i == last && t <= p.end)) {
                return Ok(p);
            }
        }
        Err(Error::TimeOutsideSchedule { t })
    }

    /// The coefficient at time `t`.
    pub fn evaluate(&self, t: f64) -> Result<f64> {
        match self {
            TimeSchedule::Constant(c) => Ok(*c),
            TimeSchedule::Piecewise(_) => Ok(self.piece_at(t)?.value(t)),
        }
    }

    /// The coefficient at time `t`, resolved on the piece that contains
    /// `hint`. Integrators stepping inside a window between breakpoints use
    /// the window midpoint as the hint, so that evaluations landing exactly
    /// on a discontinuity take the limit from inside the window instead of
    /// the right-continuous value.
    pub fn evaluate_near(&self, hint: f64, t: f64) -> Result<f64> {
        match self {
            TimeSchedule::Constant(c) => Ok(*c),
            TimeSchedule::Piecewise(_) => {
                let p = self.piece_at(hint)?;
                let slack = 1e-9 * (p.end - p.start);
                if t >= p.start - slack && t <= p.end + slack {
                    Ok(p.value(t))
                } else {
                    self.evaluate(t)
                }
            }
        }
    }

    /// Piece boundaries, sorted and deduplicated. Empty for constants.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            TimeSchedule::Constant(_) => Vec::new(),
            TimeSchedule::Piecewise(pieces) => {
                let mut pts = Vec::with_capacity(pieces.len() * 2);
                for p in pieces {
                    pts.push(p.start);
                    pts.push(p.end);
                }
                pts.sort_by(f64::total_cmp);
                pts.dedup();
                pts
            }
        }
    }

    /// Whether the closed interval [a, b] lies inside the schedule domain
    /// with no gaps.
    pub fn covers(&self, a: f64, b: f64) -> bool {
        match self {
            TimeSchedule::Constant(_) => true,
            TimeSchedule::Piecewise(pieces) => {
                let mut cursor = a;
                for p in pieces {
                    if p.end <= cursor {
                        continue;
                    }
                    if p.start > cursor {
                        return false;
                    }
                    cursor = p.end;
                    if cursor >= b {
                        return true;
                    }
                }
                cursor >= b
            }
        }
    }

    /// Exact integral of the coefficient over [a, b] (piecewise polynomial
    /// antiderivatives). Requires coverage of the interval.
    pub fn integral(&self, a: f64, b: f64) -> Result<f64> {
        if b < a {
            return Err(Error::BadInterval { s: a, t: b });
        }
        match self {
            TimeSchedule::Constant(c) => Ok(c * (b - a)),
            TimeSchedule::Piecewise(pieces) => {
                if !self.covers(a, b) {
                    return Err(Error::TimeOutsideSchedule { t: a });
                }
                let mut total = 0.0;
                for p in pieces {
                    let lo = p.start.max(a);
                    let hi = p.end.min(b);
                    if lo < hi {
                        total += p.antiderivative(hi) - p.antiderivative(lo);
                    }
                }
                Ok(total)
            }
        }
    }

    /// Upper estimate of sup |c(t)| over [a, b]: exact for constants, a
    /// dense sample (64 interior points per overlapping piece plus piece
    /// endpoints) for polynomials.
    pub fn sup_abs(&self, a: f64, b: f64) -> Result<f64> {
        if b < a {
            return Err(Error::BadInterval { s: a, t: b });
        }
        match self {
            TimeSchedule::Constant(c) => Ok(c.abs()),
            TimeSchedule::Piecewise(pieces) => {
                if !self.covers(a, b) {
                    return Err(Error::TimeOutsideSchedule { t: a });
                }
                let mut sup: f64 = 0.0;
                for p in pieces {
                    let lo = p.start.max(a);
                    let hi = p.end.min(b);
                    if lo > hi {
                        continue;
                    }
                    for i in 0..=64 {
                        let t = lo + (hi - lo) * i as f64 / 64.0;
                        sup = sup.max(p.value(t).abs());
                    }
                }
                Ok(sup)
            }
        }
    }
}
