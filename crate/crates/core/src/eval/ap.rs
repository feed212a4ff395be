//! Precision/recall curves and the interchangeable ways of turning one into
//! an average precision.
//!
//! Interpolation schemes implement [`ApInterpolation`] and are looked up by
//! name through an [`ApRegistry`], so the CLI and config files can select
//! them at runtime.

use std::collections::BTreeMap;

use super::EvalError;

/// Name of the default scheme.
pub const ALL_POINT: &str = "all-point";
pub const ELEVEN_POINT: &str = "11-point";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub confidence: f64,
    pub recall: f64,
    pub precision: f64,
}

/// Cumulative (recall, precision) pairs in descending-confidence order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PrCurve {
    points: Vec<PrPoint>,
    n_gt: usize,
}

impl PrCurve {
    /// Builds the curve from `(confidence, is_true_positive)` pairs that are
    /// already sorted by descending confidence.
    pub fn from_ranked(ranked: &[(f64, bool)], n_gt: usize) -> Self {
        let mut tp = 0usize;
        let points = ranked
            .iter()
            .enumerate()
            .map(|(i, &(confidence, hit))| {
                if hit {
                    tp += 1;
                }
                PrPoint {
                    confidence,
                    recall: if n_gt == 0 {
                        0.0
                    } else {
                        tp as f64 / n_gt as f64
                    },
                    precision: tp as f64 / (i + 1) as f64,
                }
            })
            .collect();
        Self { points, n_gt }
    }

    pub fn points(&self) -> &[PrPoint] {
        &self.points
    }

    pub fn n_gt(&self) -> usize {
        self.n_gt
    }

    /// Precision made non-increasing in recall: each entry is the best
    /// precision reachable at that recall or beyond.
    pub fn precision_envelope(&self) -> Vec<f64> {
        let mut env: Vec<f64> = self.points.iter().map(|p| p.precision).collect();
        for i in (0..env.len().saturating_sub(1)).rev() {
            env[i] = env[i].max(env[i + 1]);
        }
        env
    }
}

pub trait ApInterpolation: Send + Sync {
    fn name(&self) -> &'static str;

    /// Average precision in `[0, 1]`; zero when the curve has no ground truth.
    fn area(&self, curve: &PrCurve) -> f64;
}

/// Area under the precision envelope, summed at every recall change.
#[derive(Debug, Default, Clone, Copy)]
pub struct AllPoint;

impl ApInterpolation for AllPoint {
    fn name(&self) -> &'static str {
        ALL_POINT
    }

    fn area(&self, curve: &PrCurve) -> f64 {
        if curve.n_gt() == 0 {
            return 0.0;
        }
        let env = curve.precision_envelope();
        let mut prev_recall = 0.0;
        let mut ap = 0.0;
        for (p, &prec) in curve.points().iter().zip(&env) {
            if p.recall > prev_recall {
                ap += (p.recall - prev_recall) * prec;
                prev_recall = p.recall;
            }
        }
        ap
    }
}

/// Mean of the envelope sampled at recall 0.0, 0.1, ..., 1.0.
#[derive(Debug, Default, Clone, Copy)]
pub struct ElevenPoint;

impl ApInterpolation for ElevenPoint {
    fn name(&self) -> &'static str {
        ELEVEN_POINT
    }

    fn area(&self, curve: &PrCurve) -> f64 {
        if curve.n_gt() == 0 {
            return 0.0;
        }
        let total: f64 = (0..=10)
            .map(|k| {
                let t = k as f64 / 10.0;
                curve
                    .points()
                    .iter()
                    .filter(|p| p.recall >= t)
                    .map(|p| p.precision)
                    .fold(0.0, f64::max)
            })
            .sum();
        total / 11.0
    }
}

/// Interpolation schemes by name.
pub struct ApRegistry {
    methods: BTreeMap<&'static str, Box<dyn ApInterpolation>>,
}

impl ApRegistry {
    pub fn empty() -> Self {
        Self {
            methods: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(AllPoint));
        r.register(Box::new(ElevenPoint));
        r
    }

    /// Adds a scheme, replacing any previous one with the same name.
    pub fn register(&mut self, method: Box<dyn ApInterpolation>) {
        self.methods.insert(method.name(), method);
    }

    pub fn get(&self, name: &str) -> Result<&dyn ApInterpolation, EvalError> {
        self.methods
            .get(name)
            .map(|m| m.as_ref())
            .ok_or_else(|| EvalError::UnknownApMethod(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.methods.keys().copied()
    }
}

impl Default for ApRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

/// All-point AP of a hit sequence already ordered by descending confidence.
pub fn average_precision(hits: &[bool], n_gt: usize) -> f64 {
    let ranked: Vec<(f64, bool)> = hits.iter().map(|&h| (0.0, h)).collect();
    AllPoint.area(&PrCurve::from_ranked(&ranked, n_gt))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_point_fixtures() {
        assert_eq!(average_precision(&[true], 1), 1.0);
        let ap = average_precision(&[true, false, true], 2);
        assert!((ap - 5.0 / 6.0).abs() < 1e-12, "{ap}");
        assert_eq!(average_precision(&[false, false], 3), 0.0);
        assert_eq!(average_precision(&[], 3), 0.0);
        assert_eq!(average_precision(&[true], 0), 0.0);
    }

    #[test]
    fn curve_points() {
        let c = PrCurve::from_ranked(&[(0.9, true), (0.8, false), (0.7, true)], 2);
        let rp: Vec<_> = c.points().iter().map(|p| (p.recall, p.precision)).collect();
        assert_eq!(rp, vec![(0.5, 1.0), (0.5, 0.5), (1.0, 2.0 / 3.0)]);
        assert_eq!(c.precision_envelope(), vec![1.0, 2.0 / 3.0, 2.0 / 3.0]);
    }

    #[test]
    fn eleven_point_fixture() {
        // envelope: 1.0 up to recall 0.5, 2/3 up to 1.0
        let c = PrCurve::from_ranked(&[(0.9, true), (0.8, false), (0.7, true)], 2);
        let expected = (6.0 * 1.0 + 5.0 * (2.0 / 3.0)) / 11.0;
        assert!((ElevenPoint.area(&c) - expected).abs() < 1e-12);
    }

    #[test]
    fn registry_lookup() {
        let r = ApRegistry::with_builtins();
        assert_eq!(r.names().collect::<Vec<_>>(), vec![ELEVEN_POINT, ALL_POINT]);
        assert_eq!(r.get(ALL_POINT).unwrap().name(), ALL_POINT);
        assert!(matches!(
            r.get("coco-101"),
            Err(EvalError::UnknownApMethod(_))
        ));
    }

    #[test]
    fn registry_accepts_custom_scheme() {
        struct Constant;
        impl ApInterpolation for Constant {
            fn name(&self) -> &'static str {
                "constant"
            }
            fn area(&self, _: &PrCurve) -> f64 {
                0.25
            }
        }
        let mut r = ApRegistry::empty();
        r.register(Box::new(Constant));
        assert_eq!(r.get("constant").unwrap().area(&PrCurve::default()), 0.25);
    }
}
