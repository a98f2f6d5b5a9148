//! Seeded Monte Carlo BLER sweeps and their CSV form.

use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::baseline::SequentialSession;
use crate::channel::{realize_channel, snr_to_sigma2, ChannelRealization, Ofdm};
use crate::codec::{HsvcCodec, Payload};
use crate::config::HsvcConfig;
use crate::error::{bail, HsvcError, Result};
use crate::rng::{keyed_stream, random_bits, DOMAIN_SWEEP};

/// Trials are simulated in fixed batches; the stop rule is evaluated only at
/// batch boundaries so the result does not depend on the worker count.
pub const BATCH: u64 = 1024;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Hsvc,
    SvcSequential,
}

impl Scheme {
    fn domain_bit(self) -> u64 {
        match self {
            Scheme::Hsvc => 0,
            Scheme::SvcSequential => 1 << 31,
        }
    }
}

impl FromStr for Scheme {
    type Err = HsvcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hsvc" => Ok(Scheme::Hsvc),
            "svc-seq" => Ok(Scheme::SvcSequential),
            _ => Err(HsvcError::Config(format!(
                "unknown scheme {s:?} (expected hsvc or svc-seq)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub config: HsvcConfig,
    pub snr_grid_db: Vec<f64>,
    pub trials_per_point: u64,
    pub master_seed: u64,
    pub scheme: Scheme,
    /// Stop a point early once every user has at least this many block errors.
    pub stop_rule: Option<u64>,
    /// Worker threads; 0 uses rayon's default.
    pub workers: usize,
}

impl SweepSpec {
    pub fn new(
        config: HsvcConfig,
        snr_grid_db: Vec<f64>,
        trials_per_point: u64,
        master_seed: u64,
        scheme: Scheme,
    ) -> Self {
        Self {
            config,
            snr_grid_db,
            trials_per_point,
            master_seed,
            scheme,
            stop_rule: None,
            workers: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.snr_grid_db.is_empty() {
            bail!(Config, "SNR grid is empty");
        }
        if let Some(bad) = self.snr_grid_db.iter().find(|v| !v.is_finite()) {
            bail!(Config, "SNR {bad} is not finite");
        }
        if self.trials_per_point == 0 {
            bail!(Config, "trials per point must be at least 1");
        }
        Ok(())
    }
}

/// Aggregated outcome at one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct BlerPoint {
    pub snr_db: f64,
    pub m: usize,
    pub trials_run: u64,
    pub block_errors: Vec<u64>,
}

impl BlerPoint {
    pub fn bler(&self, user: usize) -> f64 {
        self.block_errors[user] as f64 / self.trials_run as f64
    }

    /// Unweighted mean of the per-user BLERs.
    pub fn avg_bler(&self) -> f64 {
        self.total_errors() as f64 / (self.trials_run * self.block_errors.len() as u64) as f64
    }

    pub fn total_errors(&self) -> u64 {
        self.block_errors.iter().sum()
    }

    pub fn wilson(&self, user: usize) -> (f64, f64) {
        wilson_interval(self.block_errors[user], self.trials_run)
    }

    /// Interval for the average, treating all user packets as one pool.
    pub fn avg_wilson(&self) -> (f64, f64) {
        wilson_interval(
            self.total_errors(),
            self.trials_run * self.block_errors.len() as u64,
        )
    }
}

/// Wilson score interval at 95% for `errors` out of `trials`.
pub fn wilson_interval(errors: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if errors == 0 {
        0.0
    } else {
        (centre - half).max(0.0)
    };
    let hi = if errors == trials {
        1.0
    } else {
        (centre + half).min(1.0)
    };
    (lo, hi)
}

/// One trial's per-user error flags.
trait Link: Sync {
    fn users(&self) -> usize;
    fn trial<R: Rng>(&self, rng: &mut R, sigma2: f64) -> Result<Vec<bool>>;
}

struct HsvcLink {
    codec: HsvcCodec,
    ofdm: Ofdm,
}

impl HsvcLink {
    fn new(config: &HsvcConfig) -> Result<Self> {
        Ok(Self {
            ofdm: Ofdm::new(config.m, config.cp_len)?,
            codec: HsvcCodec::new(config.clone())?,
        })
    }
}

impl Link for HsvcLink {
    fn users(&self) -> usize {
        self.codec.config().u()
    }

    fn trial<R: Rng>(&self, rng: &mut R, sigma2: f64) -> Result<Vec<bool>> {
        let cfg = self.codec.config();
        let payload = Payload::random(rng, self.codec.capacity());
        let x = self.codec.spread(&self.codec.encode(&payload)?)?;
        let channels = realize_channel(rng, cfg.u(), cfg.l_ch, cfg.m, cfg.cp_len)?;
        channels
            .iter()
            .enumerate()
            .map(|(u, ch)| {
                let y = self.ofdm.transmit(&x, ch, sigma2, rng)?;
                let phi = self.codec.effective_matrix(ch)?;
                Ok(!self.codec.decode(&y, phi.as_view(), u).matches(&payload))
            })
            .collect()
    }
}

struct SequentialLink {
    session: SequentialSession,
    common_bits: usize,
    private_bits: Vec<usize>,
}

impl SequentialLink {
    fn new(config: &HsvcConfig) -> Result<Self> {
        let cap = config.capacity()?;
        let session = SequentialSession::new(config)?;
        if session.total_bits() != cap.total() || session.total_subcarriers() != config.m {
            bail!(
                Config,
                "baseline carries {} bits on {} subcarriers, HSVC {} bits on {}",
                session.total_bits(),
                session.total_subcarriers(),
                cap.total(),
                config.m
            );
        }
        Ok(Self {
            session,
            common_bits: cap.common_bits,
            private_bits: cap.users.iter().map(|u| u.total()).collect(),
        })
    }
}

impl Link for SequentialLink {
    fn users(&self) -> usize {
        self.private_bits.len()
    }

    fn trial<R: Rng>(&self, rng: &mut R, sigma2: f64) -> Result<Vec<bool>> {
        let common = random_bits(rng, self.common_bits);
        let private: Vec<Vec<bool>> = self
            .private_bits
            .iter()
            .map(|&b| random_bits(rng, b))
            .collect();
        self.session.run(&common, &private, sigma2, rng)
    }
}

fn run_point<L: Link>(
    link: &L,
    spec: &SweepSpec,
    point: usize,
    snr_db: f64,
    m: usize,
) -> Result<BlerPoint> {
    let domain = DOMAIN_SWEEP | spec.scheme.domain_bit() | point as u64;
    let sigma2 = snr_to_sigma2(snr_db);
    let mut errors = vec![0u64; link.users()];
    let mut done = 0u64;
    while done < spec.trials_per_point {
        let end = (done + BATCH).min(spec.trials_per_point);
        let batch = (done..end)
            .into_par_iter()
            .map(|t| link.trial(&mut keyed_stream(spec.master_seed, domain, t), sigma2))
            .try_fold(
                || vec![0u64; errors.len()],
                |mut acc, flags| {
                    flags?
                        .iter()
                        .zip(acc.iter_mut())
                        .for_each(|(&f, a)| *a += u64::from(f));
                    Ok::<_, HsvcError>(acc)
                },
            )
            .try_reduce(
                || vec![0u64; errors.len()],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(a, b)| *a += b);
                    Ok(a)
                },
            )?;
        errors.iter_mut().zip(batch).for_each(|(e, b)| *e += b);
        done = end;
        if spec
            .stop_rule
            .is_some_and(|min| errors.iter().all(|&e| e >= min))
        {
            break;
        }
    }
    Ok(BlerPoint {
        snr_db,
        m,
        trials_run: done,
        block_errors: errors,
    })
}

fn in_pool<T: Send>(workers: usize, job: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HsvcError::Config(format!("cannot start {workers} workers: {e}")))?;
    pool.install(job)
}

fn sweep_points(spec: &SweepSpec, points: &[(f64, HsvcConfig)]) -> Result<Vec<BlerPoint>> {
    in_pool(spec.workers, || {
        points
            .iter()
            .enumerate()
            .map(|(i, (snr, cfg))| match spec.scheme {
                Scheme::Hsvc => run_point(&HsvcLink::new(cfg)?, spec, i, *snr, cfg.m),
                Scheme::SvcSequential => {
                    run_point(&SequentialLink::new(cfg)?, spec, i, *snr, cfg.m)
                }
            })
            .collect()
    })
}

/// BLER over the SNR grid at the configured subcarrier count.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<BlerPoint>> {
    spec.validate()?;
    let points: Vec<(f64, HsvcConfig)> = spec
        .snr_grid_db
        .iter()
        .map(|&s| (s, spec.config.clone()))
        .collect();
    sweep_points(spec, &points)
}

/// BLER over `m_grid` at the single SNR `spec.snr_grid_db[0]`.
pub fn run_subcarrier_sweep(spec: &SweepSpec, m_grid: &[usize]) -> Result<Vec<BlerPoint>> {
    spec.validate()?;
    if spec.snr_grid_db.len() != 1 {
        bail!(
            Config,
            "a subcarrier sweep takes exactly one SNR, got {}",
            spec.snr_grid_db.len()
        );
    }
    if m_grid.is_empty() {
        bail!(Config, "subcarrier grid is empty");
    }
    let snr = spec.snr_grid_db[0];
    let points = m_grid
        .iter()
        .map(|&m| {
            let cfg = spec.config.with_subcarriers(m);
            cfg.validate()?;
            Ok((snr, cfg))
        })
        .collect::<Result<Vec<_>>>()?;
    sweep_points(spec, &points)
}

/// Writes `snr_db,M,trials,user,block_errors,bler,bler_lo95,bler_hi95`, one row
/// per user (1-based) and an `avg` row per point.
pub fn write_csv<W: Write>(points: &[BlerPoint], out: W) -> Result<()> {
    let io = |e: csv::Error| HsvcError::InvalidInput(format!("CSV write failed: {e}"));
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record([
        "snr_db",
        "M",
        "trials",
        "user",
        "block_errors",
        "bler",
        "bler_lo95",
        "bler_hi95",
    ])
    .map_err(io)?;
    for p in points {
        let mut row = |user: String, errors: u64, bler: f64, (lo, hi): (f64, f64)| {
            w.write_record([
                p.snr_db.to_string(),
                p.m.to_string(),
                p.trials_run.to_string(),
                user,
                errors.to_string(),
                bler.to_string(),
                lo.to_string(),
                hi.to_string(),
            ])
        };
        for u in 0..p.block_errors.len() {
            row(
                (u + 1).to_string(),
                p.block_errors[u],
                p.bler(u),
                p.wilson(u),
            )
            .map_err(io)?;
        }
        row("avg".into(), p.total_errors(), p.avg_bler(), p.avg_wilson()).map_err(io)?;
    }
    w.flush()
        .map_err(|e| HsvcError::InvalidInput(format!("CSV write failed: {e}")))?;
    Ok(())
}

pub fn csv_string(points: &[BlerPoint]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(points, &mut buf)?;
    Ok(String::from_utf8(buf).expect("CSV is ASCII"))
}

/// Human-readable capacity table; fails if the parts do not add up.
pub fn capacity_report(config: &HsvcConfig) -> Result<String> {
    config.validate()?;
    let cap = config.capacity()?;
    let mut out = String::new();
    let _ = writeln!(out, "common  b_c = {}", cap.common_bits);
    for (u, c) in cap.users.iter().enumerate() {
        let _ = writeln!(
            out,
            "user {}  b_1 = {}  b_2 = {}  total = {}",
            u + 1,
            c.index_bits,
            c.symbol_bits,
            c.total()
        );
    }
    let parts = cap.common_bits
        + cap
            .users
            .iter()
            .map(|c| c.index_bits + c.symbol_bits)
            .sum::<usize>();
    if parts != cap.total() {
        bail!(
            InvalidInput,
            "capacity parts sum to {parts}, total is {}",
            cap.total()
        );
    }
    let _ = writeln!(out, "total   b = {}", cap.total());
    Ok(out)
}

/// Noiseless identity-channel round trips; returns the number of payloads not
/// recovered bit-exactly by every user.
pub fn roundtrip(config: &HsvcConfig, trials: u64, seed: u64) -> Result<u64> {
    config.validate()?;
    let codec = HsvcCodec::new(config.clone())?;
    let phi = codec.effective_matrix(&ChannelRealization::identity(config.m))?;
    let mut failures = 0;
    for t in 0..trials {
        let mut rng = keyed_stream(seed, DOMAIN_SWEEP, t);
        let payload = Payload::random(&mut rng, codec.capacity());
        let y = codec.spread(&codec.encode(&payload)?)?;
        if codec
            .decode_all(&y, phi.as_view())
            .iter()
            .any(|r| !r.matches(&payload))
        {
            failures += 1;
        }
    }
    Ok(failures)
}

/// Parses `A:B:STEP` (inclusive) into a grid.
pub fn parse_snr_range(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || HsvcError::Config(format!("SNR range {text:?} is not A:B:STEP"));
    let [a, b, step] = parts.as_slice() else {
        return Err(bad());
    };
    let (a, b, step): (f64, f64, f64) = (
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
        step.trim().parse().map_err(|_| bad())?,
    );
    if !(step > 0.0) || !(b >= a) || !a.is_finite() || !b.is_finite() {
        return Err(bad());
    }
    let count = ((b - a) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| a + i as f64 * step).collect())
}
