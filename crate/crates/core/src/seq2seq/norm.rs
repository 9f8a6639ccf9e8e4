use serde::{Deserialize, Serialize};

/// z-score scaling for travel-time features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZScore {
    pub mean: f64,
    pub std: f64,
}

impl ZScore {
    pub const IDENTITY: ZScore = ZScore { mean: 0.0, std: 1.0 };

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    #[inline]
    pub fn invert(&self, y: f64) -> f64 {
        y * self.std + self.mean
    }
}

/// Min-max scaling to [0, 1] for times of day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub const IDENTITY: MinMax = MinMax { min: 0.0, max: 1.0 };

    #[inline]
    fn range(&self) -> f64 {
        let r = self.max - self.min;
        if r > 0.0 {
            r
        } else {
            1.0
        }
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.min) / self.range()
    }

    #[inline]
    pub fn invert(&self, y: f64) -> f64 {
        y * self.range() + self.min
    }
}

/// Per-feature scaling statistics, fitted on training examples only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub enc_cur: ZScore,
    pub enc_pw: ZScore,
    pub dec_pv: ZScore,
    pub dec_pw: ZScore,
    pub te_pv: MinMax,
    pub te_pw: MinMax,
    pub t_c: MinMax,
    pub target: ZScore,
}

impl NormStats {
    pub fn identity() -> Self {
        Self {
            enc_cur: ZScore::IDENTITY,
            enc_pw: ZScore::IDENTITY,
            dec_pv: ZScore::IDENTITY,
            dec_pw: ZScore::IDENTITY,
            te_pv: MinMax::IDENTITY,
            te_pw: MinMax::IDENTITY,
            t_c: MinMax::IDENTITY,
            target: ZScore::IDENTITY,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip(x in -1e5f64..1e5, mean in -1e3f64..1e3, std in 1e-2f64..1e3, lo in 0f64..4e4, span in 0f64..4e4) {
            let z = ZScore { mean, std };
            prop_assert!((z.invert(z.apply(x)) - x).abs() <= 1e-9 * x.abs().max(1.0));
            let m = MinMax { min: lo, max: lo + span };
            prop_assert!((m.invert(m.apply(x)) - x).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }

    #[test]
    fn degenerate_range_is_shift_only() {
        let m = MinMax { min: 5.0, max: 5.0 };
        assert_eq!(m.apply(5.0), 0.0);
        assert_eq!(m.apply(7.0), 2.0);
    }
}
