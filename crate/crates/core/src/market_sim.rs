//! Synthetic RFQ market generator.
//!
//! Every random draw comes from a ChaCha stream keyed by `(seed, stream id)`,
//! so the dataset is a pure function of [`SimConfig`]. Bond price paths each
//! get their own stream and can be generated independently.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features;
use crate::math::sigmoid;

/// Prices are stored with this many decimals (micro-dollars).
pub const PRICE_DECIMALS: i32 = 6;

/// Floor applied to the ask when shocks cross the book.
pub const MIN_BOOK_WIDTH: f64 = 1e-4;

/// Slack used when comparing decimal prices held as `f64`.
pub const PRICE_EPS: f64 = 1e-9;

const FIRST_TIMESTAMP: u32 = 10_000;

const STREAM_RECORDS: u64 = 0;
const STREAM_QUOTES: u64 = 1;
const STREAM_BOND_BASE: u64 = 1 << 32;
const STREAM_COMPETITOR_BASE: u64 = 2 << 32;
const STREAM_RING: u64 = 3 << 32;

/// Rounds a dollar price to [`PRICE_DECIMALS`] decimals.
pub fn quantize_price(p: f64) -> f64 {
    let scale = 10f64.powi(PRICE_DECIMALS);
    (p * scale).round() / scale
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Random stream dedicated to the price path of `bond_id`.
pub fn bond_stream(seed: u64, bond_id: u32) -> ChaCha8Rng {
    stream(seed, STREAM_BOND_BASE + bond_id as u64)
}

/// Random stream used to simulate the competitors on one RFQ.
pub fn competitor_stream(seed: u64, rfq_time: u32) -> ChaCha8Rng {
    stream(seed, STREAM_COMPETITOR_BASE + rfq_time as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatusMode {
    /// `p = sigmoid(10 |X|^2)` with no centring.
    Verbatim,
    /// `p = sigmoid(10 (|X|^2 - 1))`: outside the unit circle fills, inside misses.
    RingDistance,
    /// Logistic in Response, LogNotional and MOM5.
    #[default]
    FeatureLinked,
}

/// Coefficients of the feature-linked fill model.
///
/// `logit = intercept + response * Response + log_notional * (LogNotional - log_notional_center) + mom5 * MOM5`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkCoefficients {
    pub intercept: f64,
    pub response: f64,
    pub log_notional: f64,
    pub mom5: f64,
    /// Mean of `ln(Notional)` under the generator (`5 ln 10`).
    pub log_notional_center: f64,
}

impl Default for LinkCoefficients {
    fn default() -> Self {
        Self {
            intercept: 0.0,
            response: -400.0,
            log_notional: -0.4,
            mom5: 8_000.0,
            log_notional_center: 5.0 * std::f64::consts::LN_10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_records: usize,
    /// Trailing RFQs left unquoted; their status is withheld from training.
    pub n_live: usize,
    pub n_bonds: u32,
    pub p0: f64,
    pub s0: f64,
    pub mu: f64,
    pub sigma_s: f64,
    pub sigma_b: f64,
    pub sigma_a: f64,
    pub dt: f64,
    pub quote_band: f64,
    pub status_mode: StatusMode,
    pub link: LinkCoefficients,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_records: 10_005,
            n_live: 5,
            n_bonds: 5,
            p0: 124.24,
            s0: 0.1,
            mu: 0.0,
            sigma_s: 0.02,
            sigma_b: 0.005,
            sigma_a: 0.005,
            dt: 1.0,
            quote_band: 0.01,
            status_mode: StatusMode::FeatureLinked,
            link: LinkCoefficients::default(),
            seed: 42,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_live >= self.n_records {
            return fail("n_live must be smaller than n_records");
        }
        if self.n_bonds == 0 {
            return fail("n_bonds must be positive");
        }
        if !(self.s0 > 0.0) {
            return fail("s0 must be positive");
        }
        if !(self.p0.is_finite() && self.p0 > 0.0) {
            return fail("p0 must be a positive price");
        }
        if !(self.sigma_s >= 0.0 && self.sigma_b >= 0.0 && self.sigma_a >= 0.0) {
            return fail("volatilities must be non-negative");
        }
        if !(self.dt > 0.0) {
            return fail("dt must be positive");
        }
        if !(self.quote_band > 0.0) {
            return fail("quote_band must be positive");
        }
        if !self.mu.is_finite() {
            return fail("mu must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Offer = 0,
    Bid = 1,
}

impl Side {
    /// `+1` for a bid, `-1` for an offer.
    pub fn sign(self) -> f64 {
        match self {
            Side::Bid => 1.0,
            Side::Offer => -1.0,
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Side::Offer),
            1 => Some(Side::Bid),
            _ => None,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Side::Bid => Side::Offer,
            Side::Offer => Side::Bid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Missed = 0,
    Done = 1,
}

impl Status {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Status::Missed),
            1 => Some(Status::Done),
            _ => None,
        }
    }

    pub fn from_bool(done: bool) -> Self {
        if done {
            Status::Done
        } else {
            Status::Missed
        }
    }
}

/// Level-1 book for one bond, indexed by that bond's step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePath {
    pub bond_id: u32,
    pub bid: Vec<f64>,
    pub ask: Vec<f64>,
    pub mid: Vec<f64>,
    /// The GBM spread state `S_t` (not `ask - bid`, which also carries the shocks).
    pub spread: Vec<f64>,
}

impl PricePath {
    pub fn len(&self) -> usize {
        self.mid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mid.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfqRecord {
    pub time: u32,
    pub bond: u32,
    pub side: Side,
    pub notional: u64,
    pub counterparty: u8,
    pub mid_price: f64,
    pub quoted_price: f64,
    pub competition: u8,
    pub status: Status,
    pub next_mid_price: f64,
    pub live: bool,
}

/// Simulates `n_steps` points of one bond's book.
pub fn gen_price_path(config: &SimConfig, bond_id: u32, n_steps: usize) -> Result<PricePath> {
    let mut rng = bond_stream(config.seed, bond_id);
    let shock_b = Normal::new(0.0, config.sigma_b).map_err(|e| Error::Config(e.to_string()))?;
    let shock_a = Normal::new(0.0, config.sigma_a).map_err(|e| Error::Config(e.to_string()))?;

    let mut path = PricePath {
        bond_id,
        bid: Vec::with_capacity(n_steps),
        ask: Vec::with_capacity(n_steps),
        mid: Vec::with_capacity(n_steps),
        spread: Vec::with_capacity(n_steps),
    };
    if n_steps == 0 {
        return Ok(path);
    }

    let b0 = config.p0 - config.s0 / 2.0;
    let a0 = config.p0 + config.s0 / 2.0;
    path.bid.push(b0);
    path.ask.push(a0);
    path.mid.push((b0 + a0) / 2.0);
    path.spread.push(config.s0);

    let drift = config.mu * config.dt;
    let vol = config.sigma_s * config.dt.sqrt();
    for t in 1..n_steps {
        let eps: f64 = StandardNormal.sample(&mut rng);
        let eps_b = shock_b.sample(&mut rng);
        let eps_a = shock_a.sample(&mut rng);
        let m_prev = path.mid[t - 1];
        let s = path.spread[t - 1] * (drift + vol * eps).exp();
        let b = m_prev - s / 2.0 + eps_b;
        let mut a = m_prev + s / 2.0 + eps_a;
        if a < b {
            a = b + MIN_BOOK_WIDTH;
        }
        let m = (b + a) / 2.0;
        if !(s.is_finite() && b.is_finite() && a.is_finite() && s > 0.0) {
            return Err(Error::NonFinite(format!(
                "simulating bond {bond_id} at step {t} (spread {s}); check mu/sigma/dt magnitudes"
            )));
        }
        path.bid.push(b);
        path.ask.push(a);
        path.mid.push(m);
        path.spread.push(s);
    }
    Ok(path)
}

/// Draws `mid + delta` with `delta ~ Uniform[-band, band]`.
pub fn gen_quote_price<R: Rng + ?Sized>(mid: f64, band: f64, rng: &mut R) -> f64 {
    if band <= 0.0 {
        return mid;
    }
    let delta = rng.random_range(-band..=band);
    mid + delta
}

/// Inputs of the feature-linked fill model for one RFQ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatusFeatures {
    pub response: f64,
    pub log_notional: f64,
    pub mom5: f64,
}

/// Latent point `((1 + 0.3N) cos 2piU, (1 + 0.3N) sin 2piU)`.
pub fn draw_latent_point<R: Rng + ?Sized>(rng: &mut R) -> [f64; 2] {
    let u: f64 = rng.random();
    let n: f64 = StandardNormal.sample(rng);
    latent_point(u, n)
}

pub fn latent_point(u: f64, n: f64) -> [f64; 2] {
    let r = 1.0 + 0.3 * n;
    let angle = 2.0 * std::f64::consts::PI * u;
    [r * angle.cos(), r * angle.sin()]
}

pub fn verbatim_probability(x: [f64; 2]) -> f64 {
    sigmoid(10.0 * (x[0] * x[0] + x[1] * x[1]))
}

pub fn ring_probability(x: [f64; 2]) -> f64 {
    sigmoid(10.0 * (x[0] * x[0] + x[1] * x[1] - 1.0))
}

pub fn linked_probability(coef: &LinkCoefficients, f: &StatusFeatures) -> f64 {
    let z = coef.intercept
        + coef.response * f.response
        + coef.log_notional * (f.log_notional - coef.log_notional_center)
        + coef.mom5 * f.mom5;
    sigmoid(z)
}

/// Draws one fill status under `config.status_mode`.
pub fn gen_status<R: Rng + ?Sized>(
    config: &SimConfig,
    rng: &mut R,
    features: Option<&StatusFeatures>,
) -> Result<Status> {
    let p = match config.status_mode {
        StatusMode::Verbatim => verbatim_probability(draw_latent_point(rng)),
        StatusMode::RingDistance => ring_probability(draw_latent_point(rng)),
        StatusMode::FeatureLinked => {
            let f = features.ok_or_else(|| {
                Error::Config("feature_linked status mode requires row features".into())
            })?;
            linked_probability(&config.link, f)
        }
    };
    Ok(Status::from_bool(rng.random_bool(p)))
}

/// One labelled point of the ring classification problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingSample {
    pub point: [f64; 2],
    pub status: Status,
}

/// Standalone ring-distance samples on the two latent coordinates.
pub fn gen_ring_samples(n: usize, seed: u64) -> Vec<RingSample> {
    let mut rng = stream(seed, STREAM_RING);
    (0..n)
        .map(|_| {
            let point = draw_latent_point(&mut rng);
            let status = Status::from_bool(rng.random_bool(ring_probability(point)));
            RingSample { point, status }
        })
        .collect()
}

/// Full generator output: the records plus the book paths they were drawn from.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub records: Vec<RfqRecord>,
    pub paths: Vec<PricePath>,
}

struct RowDraw {
    time: u32,
    bond: u32,
    side: Side,
    counterparty: u8,
    competition: u8,
    notional: u64,
    live: bool,
}

pub fn simulate(config: &SimConfig) -> Result<Simulation> {
    config.validate()?;
    let n = config.n_records;
    let first_live = n - config.n_live;

    let mut rng = stream(config.seed, STREAM_RECORDS);
    let mut time = FIRST_TIMESTAMP;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            time += rng.random_range(1..=9u32);
        }
        let live = i >= first_live;
        let bond = if live {
            ((i - first_live) as u32) % config.n_bonds
        } else {
            rng.random_range(0..config.n_bonds)
        };
        let side = if rng.random_bool(0.5) {
            Side::Bid
        } else {
            Side::Offer
        };
        let counterparty = rng.random_range(0..=3u8);
        let competition = rng.random_range(1..=4u8);
        let exponent = rng.random_range(3..=7u32);
        rows.push(RowDraw {
            time,
            bond,
            side,
            counterparty,
            competition,
            notional: 10u64.pow(exponent),
            live,
        });
    }

    let mut counts = vec![0usize; config.n_bonds as usize];
    for r in &rows {
        counts[r.bond as usize] += 1;
    }
    let paths = (0..config.n_bonds)
        .map(|b| gen_price_path(config, b, counts[b as usize] + 1))
        .collect::<Result<Vec<_>>>()?;

    let mut quote_rng = stream(config.seed, STREAM_QUOTES);
    let mut step = vec![0usize; config.n_bonds as usize];
    let mut history: Vec<Vec<f64>> = vec![Vec::new(); config.n_bonds as usize];
    let mut records = Vec::with_capacity(n);
    for r in rows {
        let b = r.bond as usize;
        let t = step[b];
        step[b] += 1;
        let mid = quantize_price(paths[b].mid[t]);
        let next_mid = quantize_price(paths[b].mid[t + 1]);
        let quoted = quantize_price(gen_quote_price(mid, config.quote_band, &mut quote_rng));

        let hist = &mut history[b];
        hist.push(mid);
        let mom5 = if hist.len() > 5 {
            features::momentum(mid, hist[hist.len() - 1 - 5])?
        } else {
            0.0
        };
        let status_features = StatusFeatures {
            response: features::response(r.side, mid, quoted),
            log_notional: (r.notional as f64).ln(),
            mom5,
        };
        let status = gen_status(config, &mut quote_rng, Some(&status_features))?;

        records.push(RfqRecord {
            time: r.time,
            bond: r.bond,
            side: r.side,
            notional: r.notional,
            counterparty: r.counterparty,
            mid_price: mid,
            quoted_price: quoted,
            competition: r.competition,
            status,
            next_mid_price: next_mid,
            live: r.live,
        });
    }
    Ok(Simulation { records, paths })
}

/// The simulated RFQ table (see [`simulate`] for the underlying paths).
pub fn gen_rfq_dataset(config: &SimConfig) -> Result<Vec<RfqRecord>> {
    simulate(config).map(|s| s.records)
}

/// Quotes of `n` simulated competitors, drawn like our own quotes around the RFQ mid.
pub fn gen_competitor_quotes<R: Rng + ?Sized>(
    rfq: &RfqRecord,
    n: usize,
    band: f64,
    rng: &mut R,
) -> Vec<f64> {
    (0..n)
        .map(|_| quantize_price(gen_quote_price(rfq.mid_price, band, rng)))
        .collect()
}
