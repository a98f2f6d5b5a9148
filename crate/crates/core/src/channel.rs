//! OFDM framing, block-static Rayleigh channels and AWGN.
//!
//! The DFT is unitary (`F[m,n] = exp(-j2πmn/M)/√M`). A channel with `L_ch`
//! taps and a cyclic prefix of at least `L_ch - 1` samples acts circularly on
//! one OFDM symbol, so after CP removal and the DFT it reduces to a
//! per-subcarrier gain `H[k] = Σ_l h[l]·exp(-j2πkl/M)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rustfft::{Fft, FftPlanner};

use crate::error::{bail, Result};
use crate::rng::complex_gaussian;
use crate::spreading::Codebook;
use crate::C64;

/// `σ² = 10^(-SNR/10)` under unit average power per subcarrier.
pub fn snr_to_sigma2(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    sigma2: f64,
}

impl NoiseSpec {
    pub fn new(sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0) {
            bail!(
                InvalidParameter,
                "noise variance must be positive, got {sigma2}"
            );
        }
        Ok(Self { sigma2 })
    }

    pub fn from_snr_db(snr_db: f64) -> Self {
        Self {
            sigma2: snr_to_sigma2(snr_db),
        }
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn snr_db(&self) -> f64 {
        -10.0 * self.sigma2.log10()
    }
}

/// One user's time-domain taps and their `M`-point frequency response.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    taps: Vec<C64>,
    freq_response: Vec<C64>,
}

impl ChannelRealization {
    /// Builds a realization from explicit taps.
    pub fn from_taps(taps: Vec<C64>, m: usize) -> Result<Self> {
        if taps.is_empty() || taps.len() > m {
            bail!(InvalidParameter, "need 1..={m} taps, got {}", taps.len());
        }
        let freq_response = (0..m)
            .map(|k| {
                taps.iter()
                    .enumerate()
                    .map(|(l, &h)| {
                        h * C64::from_polar(
                            1.0,
                            -std::f64::consts::TAU * (k * l % m) as f64 / m as f64,
                        )
                    })
                    .sum()
            })
            .collect();
        Ok(Self {
            taps,
            freq_response,
        })
    }

    /// The noiseless identity channel.
    pub fn identity(m: usize) -> Self {
        Self {
            taps: vec![C64::new(1.0, 0.0)],
            freq_response: vec![C64::new(1.0, 0.0); m],
        }
    }

    pub fn taps(&self) -> &[C64] {
        &self.taps
    }

    pub fn freq_response(&self) -> &[C64] {
        &self.freq_response
    }

    pub fn tap_count(&self) -> usize {
        self.taps.len()
    }

    pub fn subcarriers(&self) -> usize {
        self.freq_response.len()
    }
}

/// Draws one realization per user with `l_ch` i.i.d. `CN(0, 1/l_ch)` taps.
pub fn realize_channel<R: Rng + ?Sized>(
    rng: &mut R,
    users: usize,
    l_ch: usize,
    m: usize,
    cp_len: usize,
) -> Result<Vec<ChannelRealization>> {
    check_channel_fits(l_ch, m, cp_len)?;
    (0..users)
        .map(|_| {
            let taps = (0..l_ch)
                .map(|_| complex_gaussian(rng, 1.0 / l_ch as f64))
                .collect();
            ChannelRealization::from_taps(taps, m)
        })
        .collect()
}

fn check_channel_fits(l_ch: usize, m: usize, cp_len: usize) -> Result<()> {
    if l_ch == 0 {
        bail!(Config, "channel needs at least one tap");
    }
    if l_ch > cp_len.max(1) {
        bail!(
            Config,
            "{l_ch} channel taps exceed cyclic prefix length {cp_len}"
        );
    }
    if l_ch > m {
        bail!(Config, "{l_ch} channel taps exceed {m} subcarriers");
    }
    Ok(())
}

/// `Φ = diag(H)·G`, the DFT-domain form of `F·H_T·Fᴴ·G`.
pub fn effective_matrix(codebook: &Codebook, channel: &ChannelRealization) -> Result<DMatrix<C64>> {
    let g = codebook.matrix();
    if channel.subcarriers() != g.nrows() {
        bail!(
            InvalidParameter,
            "channel has {} subcarriers, codebook has {} rows",
            channel.subcarriers(),
            g.nrows()
        );
    }
    let h = channel.freq_response();
    Ok(DMatrix::from_fn(g.nrows(), g.ncols(), |r, c| {
        h[r] * g[(r, c)]
    }))
}

/// Unitary DFT plans plus the CP length for one OFDM numerology.
#[derive(Clone)]
pub struct Ofdm {
    m: usize,
    cp_len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Ofdm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Ofdm")
            .field("m", &self.m)
            .field("cp_len", &self.cp_len)
            .finish()
    }
}

impl Ofdm {
    pub fn new(m: usize, cp_len: usize) -> Result<Self> {
        if m == 0 {
            bail!(
                InvalidParameter,
                "OFDM symbol needs at least one subcarrier"
            );
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            m,
            cp_len,
            forward: planner.plan_fft_forward(m),
            inverse: planner.plan_fft_inverse(m),
        })
    }

    pub fn subcarriers(&self) -> usize {
        self.m
    }

    pub fn cp_len(&self) -> usize {
        self.cp_len
    }

    /// Unitary DFT in place.
    pub fn dft(&self, buf: &mut [C64]) {
        self.forward.process(buf);
        let s = (self.m as f64).sqrt().recip();
        buf.iter_mut().for_each(|v| *v *= s);
    }

    /// Unitary inverse DFT in place.
    pub fn idft(&self, buf: &mut [C64]) {
        self.inverse.process(buf);
        let s = (self.m as f64).sqrt().recip();
        buf.iter_mut().for_each(|v| *v *= s);
    }

    /// Noiseless time-domain link: IDFT, CP insertion, linear convolution
    /// with the taps, CP removal, DFT.
    pub fn propagate(&self, x: &[C64], channel: &ChannelRealization) -> Result<Vec<C64>> {
        if x.len() != self.m || channel.subcarriers() != self.m {
            bail!(
                InvalidParameter,
                "frame length {} / channel length {} != M={}",
                x.len(),
                channel.subcarriers(),
                self.m
            );
        }
        if channel.tap_count() > self.cp_len + 1 {
            bail!(
                Config,
                "{} taps need a cyclic prefix of at least {}",
                channel.tap_count(),
                channel.tap_count() - 1
            );
        }
        let mut symbol = x.to_vec();
        self.idft(&mut symbol);
        let cp = self.cp_len as isize;
        let framed: Vec<C64> = (0..self.cp_len + self.m)
            .map(|i| symbol[(i as isize - cp).rem_euclid(self.m as isize) as usize])
            .collect();
        let taps = channel.taps();
        let mut rx: Vec<C64> = (self.cp_len..self.cp_len + self.m)
            .map(|n| {
                taps.iter()
                    .enumerate()
                    .map(|(l, &h)| h * framed[n - l])
                    .sum()
            })
            .collect();
        self.dft(&mut rx);
        Ok(rx)
    }

    /// `y = link(x) + w` with a caller-supplied noise vector.
    pub fn transmit_with_noise(
        &self,
        x: &[C64],
        channel: &ChannelRealization,
        noise: &[C64],
    ) -> Result<Vec<C64>> {
        if noise.len() != self.m {
            bail!(
                InvalidParameter,
                "noise length {} != M={}",
                noise.len(),
                self.m
            );
        }
        let mut y = self.propagate(x, channel)?;
        y.iter_mut().zip(noise).for_each(|(y, w)| *y += w);
        Ok(y)
    }

    /// `y = link(x) + w` with `w ~ CN(0, σ²I)`; `σ² = 0` disables the noise.
    pub fn transmit<R: Rng + ?Sized>(
        &self,
        x: &[C64],
        channel: &ChannelRealization,
        sigma2: f64,
        rng: &mut R,
    ) -> Result<Vec<C64>> {
        let noise = awgn(rng, self.m, sigma2);
        self.transmit_with_noise(x, channel, &noise)
    }
}

/// `M` draws of `CN(0, σ²)`; all zero when `σ² = 0`.
pub fn awgn<R: Rng + ?Sized>(rng: &mut R, m: usize, sigma2: f64) -> Vec<C64> {
    if sigma2 == 0.0 {
        return vec![C64::new(0.0, 0.0); m];
    }
    (0..m).map(|_| complex_gaussian(rng, sigma2)).collect()
}

/// The frequency-domain shortcut `diag(H)·x + w`.
pub fn transmit_frequency_domain(
    x: &[C64],
    channel: &ChannelRealization,
    noise: &[C64],
) -> Vec<C64> {
    x.iter()
        .zip(channel.freq_response())
        .zip(noise)
        .map(|((&x, &h), &w)| h * x + w)
        .collect()
}
