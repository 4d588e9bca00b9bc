//! Parameter derivation: splits the user-facing error budget (ε, δ) into the
//! counter-algorithm share and the sampling share, sizes the counter tables
//! to absorb over-sampling, and computes the convergence threshold ψ beyond
//! which the probabilistic guarantees hold.

use std::fmt;

use serde::Serialize;

/// Absolute error bound honored by [`probit`] on q in [0.5, 1 - 1e-9].
pub const PROBIT_MAX_ABS_ERROR: f64 = 1e-6;

#[derive(Debug, PartialEq)]
pub enum CalibrationError {
    QuantileOutOfRange(f64),
    InvalidParameter(&'static str),
}

impl fmt::Display for CalibrationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CalibrationError::QuantileOutOfRange(q) => {
                write!(f, "quantile {q} outside (0, 1)")
            }
            CalibrationError::InvalidParameter(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CalibrationError {}

/// Inverse standard normal CDF (Acklam's rational approximation, absolute
/// error well under [`PROBIT_MAX_ABS_ERROR`]).
pub fn probit(q: f64) -> Result<f64, CalibrationError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(CalibrationError::QuantileOutOfRange(q));
    }

    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    let z = if q < P_LOW {
        let t = (-2.0 * q.ln()).sqrt();
        (((((C[0] * t + C[1]) * t + C[2]) * t + C[3]) * t + C[4]) * t + C[5])
            / ((((D[0] * t + D[1]) * t + D[2]) * t + D[3]) * t + 1.0)
    } else if q <= 1.0 - P_LOW {
        let u = q - 0.5;
        let r = u * u;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * u
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let t = (-2.0 * (1.0 - q).ln()).sqrt();
        -(((((C[0] * t + C[1]) * t + C[2]) * t + C[3]) * t + C[4]) * t + C[5])
            / ((((D[0] * t + D[1]) * t + D[2]) * t + D[3]) * t + 1.0)
    };
    Ok(z)
}

/// ψ before rounding: Z_{1-δ_s/2} · V / ε_s².
pub fn psi_raw(delta_s: f64, eps_s: f64, v: u64) -> Result<f64, CalibrationError> {
    if !(delta_s > 0.0 && delta_s < 1.0) {
        return Err(CalibrationError::InvalidParameter(
            "delta_s must be in (0, 1)",
        ));
    }
    if !(eps_s > 0.0 && eps_s < 1.0) {
        return Err(CalibrationError::InvalidParameter(
            "eps_s must be in (0, 1)",
        ));
    }
    if v == 0 {
        return Err(CalibrationError::InvalidParameter("V must be positive"));
    }
    let z = probit(1.0 - delta_s / 2.0)?;
    Ok(z * v as f64 / (eps_s * eps_s))
}

/// Convergence threshold in packets: ⌈Z_{1-δ_s/2} · V · ε_s⁻² / r⌉.
/// Performing r update draws per packet divides the threshold by r.
pub fn psi(delta_s: f64, eps_s: f64, v: u64, r: u32) -> Result<u64, CalibrationError> {
    if r == 0 {
        return Err(CalibrationError::InvalidParameter("r must be positive"));
    }
    Ok((psi_raw(delta_s, eps_s, v)? / r as f64).ceil() as u64)
}

/// The sampling error actually guaranteed after N packets:
/// √(Z_{1-δ_s/2} · V / N). Below ψ this exceeds ε_s; above ψ it is smaller.
pub fn eps_s_of_n(delta_s: f64, v: u64, n: u64) -> Result<f64, CalibrationError> {
    if n == 0 {
        return Err(CalibrationError::InvalidParameter("N must be positive"));
    }
    let z = probit(1.0 - delta_s / 2.0)?;
    Ok((z * v as f64 / n as f64).sqrt())
}

/// Resolved internal parameters for a sketch.
///
/// In randomized mode the overall guarantees satisfy ε = ε_a + ε_s and
/// δ = 2·δ_s (the counter algorithm is deterministic, so its δ share is
/// zero), and hold once N ≥ ψ. Counter capacity absorbs over-sampling:
/// ⌈(1 + ε_s)/ε_a⌉ per table.
#[derive(Clone, Debug, Serialize)]
pub struct Calibration {
    pub epsilon: f64,
    pub delta: f64,
    pub theta: f64,
    pub v: u64,
    pub r: u32,
    pub eps_a: f64,
    pub eps_s: f64,
    pub delta_s: f64,
    pub capacity: usize,
    pub psi: u64,
    pub deterministic: bool,
}

impl Calibration {
    /// Splits (ε, δ) and derives capacity and ψ for a randomized sketch over
    /// a hierarchy with `h` lattice nodes.
    ///
    /// `split_ratio` is the fraction of ε assigned to the counter algorithm
    /// (ε_a); the remainder is the sampling share (ε_s). 0.5 by default.
    pub fn derive(
        epsilon: f64,
        delta: f64,
        theta: f64,
        v: u64,
        r: u32,
        split_ratio: f64,
        h: usize,
    ) -> Result<Self, CalibrationError> {
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(CalibrationError::InvalidParameter(
                "epsilon must be positive",
            ));
        }
        if theta.is_nan() || epsilon >= theta {
            return Err(CalibrationError::InvalidParameter(
                "epsilon must be below theta or the output is vacuous",
            ));
        }
        if theta > 1.0 {
            return Err(CalibrationError::InvalidParameter(
                "theta must be at most 1",
            ));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(CalibrationError::InvalidParameter(
                "delta must be in (0, 1)",
            ));
        }
        if (v as usize) < h {
            return Err(CalibrationError::InvalidParameter(
                "V must be at least the hierarchy size H",
            ));
        }
        if r == 0 || r as u64 > v {
            return Err(CalibrationError::InvalidParameter(
                "r must satisfy 1 <= r <= V",
            ));
        }
        if !(split_ratio > 0.0 && split_ratio < 1.0) {
            return Err(CalibrationError::InvalidParameter(
                "split_ratio must be in (0, 1)",
            ));
        }
        let eps_a = split_ratio * epsilon;
        let eps_s = (1.0 - split_ratio) * epsilon;
        let delta_s = delta / 2.0;
        let capacity = ((1.0 + eps_s) / eps_a).ceil() as usize;
        let psi = psi(delta_s, eps_s, v, r)?;
        Ok(Calibration {
            epsilon,
            delta,
            theta,
            v,
            r,
            eps_a,
            eps_s,
            delta_s,
            capacity,
            psi,
            deterministic: false,
        })
    }

    /// Parameters for the deterministic update-all-levels baseline: no
    /// sampling error, unscaled counts, ⌈1/ε_a⌉ counters per table and no
    /// convergence threshold.
    pub fn deterministic(eps_a: f64, theta: f64) -> Result<Self, CalibrationError> {
        if !(eps_a > 0.0 && eps_a < 1.0) {
            return Err(CalibrationError::InvalidParameter(
                "eps_a must be in (0, 1)",
            ));
        }
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(CalibrationError::InvalidParameter(
                "theta must be in (0, 1]",
            ));
        }
        Ok(Calibration {
            epsilon: eps_a,
            delta: 0.0,
            theta,
            v: 1,
            r: 1,
            eps_a,
            eps_s: 0.0,
            delta_s: 0.0,
            capacity: (1.0 / eps_a).ceil() as usize,
            psi: 0,
            deterministic: true,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Bisection inversion of an erf-based normal CDF; independent of the
    /// rational approximation above. Series for small arguments, Lentz
    /// continued fraction for the tail; both comfortably below 1e-13.
    mod oracle {
        fn erf_series(x: f64) -> f64 {
            let mut term = x;
            let mut sum = x;
            let x2 = x * x;
            for n in 1..200 {
                term *= -x2 / n as f64;
                let add = term / (2 * n + 1) as f64;
                sum += add;
                if add.abs() < 1e-18 * sum.abs() {
                    break;
                }
            }
            sum * 2.0 / std::f64::consts::PI.sqrt()
        }

        fn erfc_cf(x: f64) -> f64 {
            // erfc(x) = exp(-x^2)/sqrt(pi) / (x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
            // evaluated by backward recurrence.
            let mut tail = 0.0;
            for i in (1..=120).rev() {
                tail = (i as f64 / 2.0) / (x + tail);
            }
            (-x * x).exp() / std::f64::consts::PI.sqrt() / (x + tail)
        }

        fn erfc(x: f64) -> f64 {
            if x < 0.0 {
                2.0 - erfc(-x)
            } else if x < 3.0 {
                1.0 - erf_series(x)
            } else {
                erfc_cf(x)
            }
        }

        pub fn normal_cdf(z: f64) -> f64 {
            0.5 * erfc(-z / std::f64::consts::SQRT_2)
        }

        /// Upper-tail mass 1 - Φ(z), computed without cancellation.
        pub fn normal_sf(z: f64) -> f64 {
            0.5 * erfc(z / std::f64::consts::SQRT_2)
        }

        /// Solve Φ(z) = q for q >= 0.5 by bisecting the survival function.
        pub fn probit_bisect(q: f64) -> f64 {
            assert!((0.5..1.0).contains(&q));
            let target = 1.0 - q;
            let (mut lo, mut hi) = (0.0f64, 9.0f64);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if normal_sf(mid) > target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        }
    }

    #[test]
    fn probit_center_is_zero() {
        assert_eq!(probit(0.5).unwrap(), 0.0);
    }

    #[test]
    fn probit_known_quantiles() {
        assert!((probit(0.975).unwrap() - 1.959964).abs() < 1e-5);
        assert!((probit(0.9995).unwrap() - 3.290527).abs() < 1e-5);
    }

    #[test]
    fn probit_rejects_out_of_range() {
        for q in [0.0, 1.0, -0.3, 1.7, f64::NAN] {
            assert!(probit(q).is_err(), "q = {q}");
        }
    }

    #[test]
    fn probit_matches_bisection_oracle() {
        // Grid over the documented domain, densest near 1.
        let mut grid: Vec<f64> = (0..200).map(|i| 0.5 + 0.0024 * i as f64).collect();
        grid.extend([
            0.9875,
            0.99,
            0.9975,
            0.9995,
            0.99999,
            1.0 - 1e-7,
            1.0 - 1e-9,
        ]);
        for q in grid {
            let got = probit(q).unwrap();
            let want = oracle::probit_bisect(q);
            assert!(
                (got - want).abs() <= PROBIT_MAX_ABS_ERROR,
                "q={q}: got {got}, oracle {want}"
            );
        }
    }

    #[test]
    fn probit_oracle_sanity() {
        assert!((oracle::normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((oracle::normal_cdf(1.959963985) - 0.975).abs() < 1e-9);
        let tail = oracle::normal_sf(6.0);
        assert!(
            (tail / 9.865876450e-10 - 1.0).abs() < 1e-6,
            "sf(6) = {tail}"
        );
    }

    #[test]
    fn probit_is_monotone_and_antisymmetric() {
        let mut prev = f64::NEG_INFINITY;
        for i in 1..1000 {
            let q = i as f64 / 1000.0;
            let z = probit(q).unwrap();
            assert!(z > prev);
            prev = z;
            assert!((probit(1.0 - q).unwrap() + z).abs() < 1e-12);
        }
    }

    #[test]
    fn psi_magnitudes_at_per_mille_parameters() {
        // 2D-byte lattice, per-mille parameters: about 1e8 packets, and ten
        // times that when only a tenth of the packets are sampled.
        let base = psi(0.001, 0.001, 25, 1).unwrap();
        assert!((5e7..1.5e8).contains(&(base as f64)), "psi = {base}");
        let sampled = psi(0.001, 0.001, 250, 1).unwrap();
        assert!((5e8..1.5e9).contains(&(sampled as f64)), "psi = {sampled}");
        let expected = probit(0.9995).unwrap() * 25e6;
        assert!((base as f64 - expected).abs() <= 1.0);
        assert!((sampled as f64 - 10.0 * expected).abs() <= 10.0);
    }

    #[test]
    fn psi_scales_linearly_in_v_and_inverse_in_r() {
        let raw = psi_raw(0.01, 0.002, 33).unwrap();
        assert!((psi_raw(0.01, 0.002, 66).unwrap() - 2.0 * raw).abs() < 1e-6 * raw);
        assert!((psi_raw(0.01, 0.004, 33).unwrap() - raw / 4.0).abs() < 1e-6 * raw);
        let r1 = psi(0.01, 0.002, 33, 1).unwrap();
        let r2 = psi(0.01, 0.002, 33, 2).unwrap();
        assert!(r2 as f64 * 2.0 - r1 as f64 <= 2.0);
        assert!(r1 as f64 - r2 as f64 * 2.0 <= 2.0);
    }

    #[test]
    fn eps_s_of_n_examples() {
        // At N = psi the guaranteed sampling error is exactly eps_s. Large
        // psi keeps the integer rounding of N below the 1e-9 tolerance.
        let eps_s = 0.0005;
        let n = psi(0.001, eps_s, 100, 1).unwrap();
        let eps = eps_s_of_n(0.001, 100, n).unwrap();
        assert!((eps - eps_s).abs() < 1e-9 * eps_s, "eps = {eps}");
        let coarse = eps_s_of_n(0.001, 25, psi(0.001, 0.001, 25, 1).unwrap()).unwrap();
        assert!((coarse - 0.001).abs() < 1e-8 * 0.001, "eps = {coarse}");

        let v5 = eps_s_of_n(0.005, 5, 1_000_000).unwrap();
        assert!((v5 - 3.746354e-3).abs() < 2e-6, "eps = {v5}");

        // Quadrupling N halves the error.
        let quad = eps_s_of_n(0.005, 5, 4_000_000).unwrap();
        assert!((quad - v5 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn eps_s_of_n_rejects_zero_n() {
        assert!(eps_s_of_n(0.01, 5, 0).is_err());
    }

    #[test]
    fn derive_counts_over_sample_compensation() {
        // eps_a = eps_s = 0.001: one extra counter over the plain 1000.
        let cal = Calibration::derive(0.002, 0.01, 0.01, 25, 1, 0.5, 25).unwrap();
        assert_eq!(cal.capacity, 1001);
        assert!((cal.eps_a - 0.001).abs() < 1e-15);
        assert!((cal.eps_s - 0.001).abs() < 1e-15);
        assert!((cal.delta_s - 0.005).abs() < 1e-15);
        assert!(!cal.deterministic);

        let det = Calibration::deterministic(0.001, 0.01).unwrap();
        assert_eq!(det.capacity, 1000);
        assert_eq!(det.psi, 0);
        assert!(det.deterministic);
    }

    #[test]
    fn derive_validates_ranges() {
        assert!(Calibration::derive(0.05, 0.1, 0.05, 25, 1, 0.5, 25).is_err()); // eps >= theta
        assert!(Calibration::derive(0.01, 0.1, 0.05, 20, 1, 0.5, 25).is_err()); // V < H
        assert!(Calibration::derive(0.01, 0.1, 0.05, 25, 26, 0.5, 25).is_err()); // r > V
        assert!(Calibration::derive(0.01, 0.0, 0.05, 25, 1, 0.5, 25).is_err()); // delta
        assert!(Calibration::derive(0.01, 0.1, 0.05, 25, 1, 1.0, 25).is_err()); // split
        assert!(Calibration::derive(0.01, 0.1, 0.05, 25, 1, 0.5, 25).is_ok());
    }

    #[test]
    fn capacity_never_below_plain_sizing() {
        for (eps, split) in [(0.002, 0.5), (0.01, 0.3), (0.05, 0.7), (0.004, 0.25)] {
            let cal = Calibration::derive(eps, 0.05, 0.06, 40, 1, split, 33).unwrap();
            let plain = (1.0 / cal.eps_a).ceil() as usize;
            assert!(cal.capacity >= plain, "{} < {}", cal.capacity, plain);
        }
    }
}
