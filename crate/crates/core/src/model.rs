//! European calls on a log-normal asset driven by a piecewise-linear
//! volatility curve.
//!
//! Each option `i` pays `(S(Tᵢ) − Kᵢ)⁺` with
//! `S(T) = S₀ · exp(−½σ(T)²T + σ(T)√T · w)`, zero rates, and one standard
//! normal driver `w` per distinct expiry. The knot volatilities are the
//! parameters being calibrated.
//!
//! [`payoffs`] and the tape returned by [`build_model_tape`] evaluate the
//! same floating-point expression in the same order, so they agree bit for
//! bit.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::paths::PathBatch;
use crate::tape::{Tape, TapeBuilder, Var};

/// Piecewise-linear volatility curve with flat extrapolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolCurve {
    times: Vec<f64>,
    vols: Vec<f64>,
}

impl VolCurve {
    pub fn new(times: Vec<f64>, vols: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::invalid("knots", "a curve needs at least one knot"));
        }
        if times.len() != vols.len() {
            return Err(Error::DimensionMismatch {
                what: "knot vols",
                expected: times.len(),
                got: vols.len(),
            });
        }
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::invalid("knot_times", "times must be finite and non-negative"));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("knot_times", "times must be strictly increasing"));
        }
        Self::check_vols(&vols)?;
        Ok(Self { times, vols })
    }

    /// Flat curve with the given knot times.
    pub fn flat(times: Vec<f64>, vol: f64) -> Result<Self> {
        let vols = vec![vol; times.len()];
        Self::new(times, vols)
    }

    fn check_vols(vols: &[f64]) -> Result<()> {
        if vols.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("knot_vols", "vols must be finite and positive"));
        }
        Ok(())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn vols(&self) -> &[f64] {
        &self.vols
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Same knot times, new vols.
    pub fn with_vols(&self, vols: &[f64]) -> Result<Self> {
        if vols.len() != self.len() {
            return Err(Error::DimensionMismatch {
                what: "knot vols",
                expected: self.len(),
                got: vols.len(),
            });
        }
        Self::check_vols(vols)?;
        Ok(Self {
            times: self.times.clone(),
            vols: vols.to_vec(),
        })
    }

    /// Which knots `σ(t)` depends on, and with what weight.
    fn bracket(&self, t: f64) -> Bracket {
        let n = self.len();
        if t <= self.times[0] {
            return Bracket::Knot(0);
        }
        if t >= self.times[n - 1] {
            return Bracket::Knot(n - 1);
        }
        // t lies strictly inside (times[0], times[n-1])
        let hi = self.times.partition_point(|&x| x <= t);
        let lo = hi - 1;
        if self.times[lo] == t {
            return Bracket::Knot(lo);
        }
        let theta = (t - self.times[lo]) / (self.times[hi] - self.times[lo]);
        Bracket::Between { lo, hi, theta }
    }
}

#[derive(Debug, Clone, Copy)]
enum Bracket {
    Knot(usize),
    Between { lo: usize, hi: usize, theta: f64 },
}

impl Bracket {
    #[inline]
    fn eval(self, vols: &[f64]) -> f64 {
        match self {
            Bracket::Knot(k) => vols[k],
            Bracket::Between { lo, hi, theta } => vols[lo] + (vols[hi] - vols[lo]) * theta,
        }
    }
}

/// Linear interpolation between bracketing knots, flat outside.
pub fn vol_at(curve: &VolCurve, t: f64) -> f64 {
    curve.bracket(t).eval(&curve.vols)
}

/// `S₀ · exp(−½σ²T + σ√T·w)` with `σ = vol_at(curve, T)`.
pub fn terminal_price(spot: f64, curve: &VolCurve, expiry: f64, w: f64) -> f64 {
    lognormal(spot, vol_at(curve, expiry), expiry, w)
}

#[inline]
fn lognormal(spot: f64, vol: f64, expiry: f64, w: f64) -> f64 {
    let drift = (vol * vol) * (-0.5 * expiry);
    let shock = (vol * expiry.sqrt()) * w;
    (drift + shock).exp() * spot
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EuropeanCall {
    pub strike: f64,
    pub expiry: f64,
    /// Observed price `Cᵢ`.
    pub price: f64,
}

/// Spot plus the quoted options.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketSpec {
    spot: f64,
    options: Vec<EuropeanCall>,
    expiries: Vec<f64>,
    driver: Vec<usize>,
}

impl MarketSpec {
    pub fn new(spot: f64, options: Vec<EuropeanCall>) -> Result<Self> {
        if !(spot.is_finite() && spot > 0.0) {
            return Err(Error::invalid("spot", format!("must be positive, got {spot}")));
        }
        if options.is_empty() {
            return Err(Error::invalid("options", "need at least one option"));
        }
        for o in &options {
            if !(o.strike.is_finite() && o.strike >= 0.0) {
                return Err(Error::invalid("strike", format!("must be non-negative, got {}", o.strike)));
            }
            if !(o.expiry.is_finite() && o.expiry > 0.0) {
                return Err(Error::invalid("expiry", format!("must be positive, got {}", o.expiry)));
            }
            if !(o.price.is_finite() && o.price >= 0.0) {
                return Err(Error::invalid("price", format!("must be non-negative, got {}", o.price)));
            }
        }
        let mut expiries: Vec<f64> = options.iter().map(|o| o.expiry).collect();
        expiries.sort_by(f64::total_cmp);
        expiries.dedup();
        let driver = options
            .iter()
            .map(|o| expiries.iter().position(|&t| t == o.expiry).expect("expiry listed"))
            .collect();
        Ok(Self {
            spot,
            options,
            expiries,
            driver,
        })
    }

    pub fn spot(&self) -> f64 {
        self.spot
    }

    pub fn options(&self) -> &[EuropeanCall] {
        &self.options
    }

    /// Number of options `m`.
    pub fn len(&self) -> usize {
        self.options.len()
    }

    pub fn is_empty(&self) -> bool {
        self.options.is_empty()
    }

    /// Distinct expiries in ascending order; entry `n` is driven by `w[n]`.
    pub fn expiries(&self) -> &[f64] {
        &self.expiries
    }

    /// Index into `w` of the driver used by option `i`.
    pub fn driver(&self, i: usize) -> usize {
        self.driver[i]
    }

    pub fn targets(&self) -> Vec<f64> {
        self.options.iter().map(|o| o.price).collect()
    }

    /// Copy with every observed price replaced.
    pub fn with_prices(&self, prices: &[f64]) -> Result<Self> {
        if prices.len() != self.len() {
            return Err(Error::DimensionMismatch {
                what: "prices",
                expected: self.len(),
                got: prices.len(),
            });
        }
        let options = self
            .options
            .iter()
            .zip(prices)
            .map(|(o, &price)| EuropeanCall { price, ..*o })
            .collect();
        Self::new(self.spot, options)
    }
}

/// `yᵢ = (S(Tᵢ) − Kᵢ)⁺` for one draw vector `w` (one entry per expiry).
pub fn payoffs(spec: &MarketSpec, curve: &VolCurve, w: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; spec.len()];
    payoffs_into(spec, curve, w, &mut out)?;
    Ok(out)
}

pub fn payoffs_into(spec: &MarketSpec, curve: &VolCurve, w: &[f64], out: &mut [f64]) -> Result<()> {
    if w.len() != spec.expiries.len() {
        return Err(Error::DimensionMismatch {
            what: "random inputs",
            expected: spec.expiries.len(),
            got: w.len(),
        });
    }
    for (i, (o, y)) in spec.options.iter().zip(out.iter_mut()).enumerate() {
        let s = terminal_price(spec.spot, curve, o.expiry, w[spec.driver[i]]);
        let itm = s - o.strike;
        *y = if itm > 0.0 { itm } else { 0.0 };
    }
    Ok(())
}

/// `G = ½ Σ (Eyᵢ − Cᵢ)²` together with its ingredients.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub g: f64,
    pub expectations: Vec<f64>,
    pub residuals: Vec<f64>,
}

impl LossValue {
    pub fn from_expectations(expectations: Vec<f64>, targets: &[f64]) -> Self {
        let residuals: Vec<f64> = expectations.iter().zip(targets).map(|(e, c)| e - c).collect();
        let g = 0.5 * residuals.iter().map(|r| r * r).sum::<f64>();
        Self {
            g,
            expectations,
            residuals,
        }
    }
}

/// Monte-Carlo loss: `Eyᵢ` is the path average of the payoffs.
pub fn loss(spec: &MarketSpec, curve: &VolCurve, paths: &PathBatch) -> Result<LossValue> {
    let n = paths.n_paths();
    if n == 0 {
        return Err(Error::invalid("paths", "need at least one path"));
    }
    let mut sums = vec![0.0; spec.len()];
    let mut y = vec![0.0; spec.len()];
    for j in 0..n {
        payoffs_into(spec, curve, paths.path(j), &mut y)?;
        for (s, v) in sums.iter_mut().zip(&y) {
            *s += v;
        }
    }
    let expectations = sums.into_iter().map(|s| s / n as f64).collect();
    Ok(LossValue::from_expectations(expectations, &spec.targets()))
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Zero-rate Black–Scholes call price.
pub fn black_scholes_call(spot: f64, strike: f64, vol: f64, expiry: f64) -> f64 {
    let intrinsic = (spot - strike).max(0.0);
    if strike == 0.0 {
        return spot;
    }
    let sd = vol * expiry.sqrt();
    if sd <= 0.0 {
        return intrinsic;
    }
    let d1 = ((spot / strike).ln() + 0.5 * sd * sd) / sd;
    let d2 = d1 - sd;
    (spot * norm_cdf(d1) - strike * norm_cdf(d2)).max(intrinsic)
}

/// Records the payoff vector as a tape: `M` = knot count (parameters),
/// `N` = distinct expiries (inputs), `m` = option count (outputs).
pub fn build_model_tape(spec: &MarketSpec, curve: &VolCurve) -> Tape {
    let mut b = TapeBuilder::new();
    let knots: Vec<Var> = (0..curve.len()).map(|_| b.param()).collect();
    let drivers: Vec<Var> = (0..spec.expiries.len()).map(|_| b.input()).collect();

    // one terminal price per distinct expiry, shared by its options; each
    // stage is recorded across all expiries so the chains interleave
    let times = &spec.expiries;
    let vols: Vec<Var> = times
        .iter()
        .map(|&t| match curve.bracket(t) {
            Bracket::Knot(k) => knots[k],
            Bracket::Between { lo, hi, theta } => {
                let span = b.sub(knots[hi], knots[lo]);
                let step = b.scale(span, theta);
                b.add(knots[lo], step)
            }
        })
        .collect();
    let vars: Vec<Var> = vols.iter().map(|&v| b.mul(v, v)).collect();
    let drifts: Vec<Var> = vars.iter().zip(times).map(|(&v, &t)| b.scale(v, -0.5 * t)).collect();
    let vol_ts: Vec<Var> = vols.iter().zip(times).map(|(&v, &t)| b.scale(v, t.sqrt())).collect();
    let shocks: Vec<Var> = vol_ts.iter().zip(&drivers).map(|(&v, &w)| b.mul(v, w)).collect();
    let xs: Vec<Var> = drifts.iter().zip(&shocks).map(|(&d, &z)| b.add(d, z)).collect();
    let growths: Vec<Var> = xs.iter().map(|&x| b.exp(x)).collect();
    let terminal: Vec<Var> = growths.iter().map(|&g| b.scale(g, spec.spot)).collect();

    for (i, o) in spec.options.iter().enumerate() {
        let k = b.constant(o.strike);
        let itm = b.sub(terminal[spec.driver[i]], k);
        let y = b.max0(itm);
        b.output(y);
    }
    b.build().expect("model tape has one output per option")
}

/// The desk-scale five-option market used throughout the tests and examples.
pub mod fixture {
    use super::*;

    pub const SPOT: f64 = 100.0;
    pub const EXPIRIES: [f64; 5] = [1.0, 2.0, 3.0, 4.0, 5.0];
    pub const STRIKES: [f64; 5] = [100.0, 105.0, 110.0, 115.0, 120.0];

    /// Flat curve with knots at the fixture expiries.
    pub fn flat_curve(vol: f64) -> VolCurve {
        VolCurve::flat(EXPIRIES.to_vec(), vol).expect("fixture knots are valid")
    }

    /// Options priced in closed form under `reference`.
    pub fn desk_market(reference: &VolCurve) -> MarketSpec {
        let options = STRIKES
            .iter()
            .zip(EXPIRIES)
            .map(|(&strike, expiry)| EuropeanCall {
                strike,
                expiry,
                price: black_scholes_call(SPOT, strike, vol_at(reference, expiry), expiry),
            })
            .collect();
        MarketSpec::new(SPOT, options).expect("fixture market is valid")
    }

    /// Gradient/variance benchmark: prices from a flat 5% curve, gradients
    /// evaluated on a flat 20% curve.
    pub fn table() -> (MarketSpec, VolCurve) {
        (desk_market(&flat_curve(0.05)), flat_curve(0.2))
    }

    /// Calibration benchmark: prices from a flat 20% curve, start at 40%.
    pub fn calibration() -> (MarketSpec, VolCurve) {
        (desk_market(&flat_curve(0.2)), flat_curve(0.4))
    }
}
