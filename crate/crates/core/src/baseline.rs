//! Single-layer sparse vector coding, sent sequentially: one common packet
//! followed by one private packet per user, each over its own share of the
//! subcarriers and its own channel draw.

use nalgebra::{DMatrix, DMatrixView};
use rand::Rng;

use crate::channel::{effective_matrix, realize_channel, ChannelRealization, Ofdm};
use crate::codec::{COMMON_BEAM, REFINE_SWEEPS};
use crate::combinadics::{
    binomial, bits_per_symbol, bits_to_rank, rank_combination, rank_to_bits, unrank_combination,
    CombinationSet,
};
use crate::config::HsvcConfig;
use crate::error::{bail, HsvcError, Result};
use crate::modem::Constellation;
use crate::sparse_recovery::{bomp_refine, bomp_with_beam};
use crate::spreading::Codebook;
use crate::C64;

/// One SVC packet geometry: `k` non-zeros among `n` positions on `m` subcarriers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SvcConfig {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub mod_order: usize,
    pub codebook_seed: u64,
}

impl SvcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k >= self.n {
            bail!(
                Config,
                "SVC needs 0 < K < N, got K={}, N={}",
                self.k,
                self.n
            );
        }
        if self.m < self.k {
            bail!(Config, "M={} cannot resolve K={} non-zeros", self.m, self.k);
        }
        bits_per_symbol(self.mod_order).map_err(|e| HsvcError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn index_bits(&self) -> usize {
        (binomial(self.n, self.k).bits() - 1) as usize
    }

    pub fn symbol_bits(&self) -> usize {
        self.k * self.mod_order.trailing_zeros() as usize
    }

    /// Bits per packet: `⌊log₂ C(N,K)⌋ + K·log₂(mod_order)`.
    pub fn capacity(&self) -> usize {
        self.index_bits() + self.symbol_bits()
    }

    /// Smallest packet carrying exactly `bits`, trying `preferred_k` non-zeros
    /// first and fewer when that cannot hit the budget.
    pub fn for_bits(
        bits: usize,
        preferred_k: usize,
        mod_order: usize,
        m: usize,
        codebook_seed: u64,
    ) -> Result<Self> {
        let per_symbol =
            bits_per_symbol(mod_order).map_err(|e| HsvcError::Config(e.to_string()))?;
        for k in (1..=preferred_k.max(1)).rev() {
            let Some(index_bits) = bits.checked_sub(k * per_symbol) else {
                continue;
            };
            let mut n = k + 1;
            loop {
                let have = (binomial(n, k).bits() - 1) as usize;
                if have == index_bits {
                    let cfg = Self {
                        n,
                        k,
                        m,
                        mod_order,
                        codebook_seed,
                    };
                    cfg.validate()?;
                    return Ok(cfg);
                }
                if have > index_bits {
                    break;
                }
                n += 1;
            }
        }
        bail!(
            Config,
            "no SVC packet with at most {preferred_k} non-zeros carries exactly {bits} bits"
        )
    }
}

/// Encoder/decoder for one packet geometry. Decoding runs the same pursuit
/// as the HSVC section search with unit sections: OMP with a beam of
/// [`COMMON_BEAM`] paths followed by swap refinement.
#[derive(Debug, Clone)]
pub struct SvcCodec {
    config: SvcConfig,
    codebook: Codebook,
    constellation: Constellation,
}

impl SvcCodec {
    pub fn new(config: SvcConfig) -> Result<Self> {
        config.validate()?;
        let codebook = Codebook::generate(config.codebook_seed, config.m, config.n, config.k)?;
        let constellation =
            Constellation::new(config.mod_order).map_err(|e| HsvcError::Config(e.to_string()))?;
        Ok(Self {
            config,
            codebook,
            constellation,
        })
    }

    pub fn config(&self) -> &SvcConfig {
        &self.config
    }

    pub fn codebook(&self) -> &Codebook {
        &self.codebook
    }

    pub fn effective_matrix(&self, channel: &ChannelRealization) -> Result<DMatrix<C64>> {
        effective_matrix(&self.codebook, channel)
    }

    /// Index bits choose the support, value bits the symbols on it.
    pub fn svc_encode(&self, bits: &[bool]) -> Result<Vec<C64>> {
        let cfg = &self.config;
        if bits.len() != cfg.capacity() {
            bail!(
                InvalidInput,
                "{} bits, packet capacity is {}",
                bits.len(),
                cfg.capacity()
            );
        }
        let (index, value) = bits.split_at(cfg.index_bits());
        let support = unrank_combination(&bits_to_rank(index), cfg.n, cfg.k)?;
        let symbols = self.constellation.modulate(value)?;
        let mut s = vec![C64::new(0.0, 0.0); cfg.n];
        for (&pos, sym) in support.members().iter().zip(symbols) {
            s[pos] = sym;
        }
        Ok(s)
    }

    pub fn svc_decode(&self, y: &[C64], phi: DMatrixView<'_, C64>) -> Result<Vec<bool>> {
        let cfg = &self.config;
        let found = bomp_with_beam(y, phi, 1, cfg.k, COMMON_BEAM)?;
        let found = bomp_refine(y, phi, 1, found, COMMON_BEAM, REFINE_SWEEPS)?;
        let support = CombinationSet::new(found.support.starts(), cfg.n)?;
        let rank = rank_combination(&support);
        let mut bits = rank_to_bits(&rank, cfg.index_bits()).map_err(|_| {
            HsvcError::DecodeFailure(format!("support rank {rank} is outside the codeword range"))
        })?;
        bits.extend(self.constellation.demodulate(&found.values));
        Ok(bits)
    }
}

/// Even split of `m_total` subcarriers over `packets`; the remainder goes to
/// the first (common) packet.
pub fn subcarrier_split(m_total: usize, packets: usize) -> Vec<usize> {
    let base = m_total / packets;
    let mut split = vec![base; packets];
    split[0] += m_total % packets;
    split
}

/// The sequential baseline matched to an HSVC configuration: same total bits,
/// same total subcarriers, same channel model.
#[derive(Debug, Clone)]
pub struct SequentialSession {
    common: SvcCodec,
    private: Vec<SvcCodec>,
    common_ofdm: Ofdm,
    private_ofdm: Vec<Ofdm>,
    l_ch: usize,
}

impl SequentialSession {
    pub fn new(hsvc: &HsvcConfig) -> Result<Self> {
        hsvc.validate()?;
        let cap = hsvc.capacity()?;
        let params = hsvc.baseline_params();
        let split = subcarrier_split(hsvc.m, hsvc.u() + 1);
        if split.iter().any(|&m| m < hsvc.l_ch) {
            bail!(
                Config,
                "subcarrier budget {} is too small for {} packets",
                hsvc.m,
                hsvc.u() + 1
            );
        }
        let packet = |bits: usize, m: usize, index: u64| {
            SvcConfig::for_bits(
                bits,
                params.k,
                params.mod_order,
                m,
                hsvc.codebook_seed.wrapping_add(index),
            )
            .and_then(SvcCodec::new)
        };
        let common = packet(cap.common_bits, split[0], 0)?;
        let private = cap
            .users
            .iter()
            .enumerate()
            .map(|(u, c)| packet(c.total(), split[u + 1], u as u64 + 1))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            common_ofdm: Ofdm::new(split[0], hsvc.cp_len)?,
            private_ofdm: split[1..]
                .iter()
                .map(|&m| Ofdm::new(m, hsvc.cp_len))
                .collect::<Result<_>>()?,
            common,
            private,
            l_ch: hsvc.l_ch,
        })
    }

    pub fn common_packet(&self) -> &SvcCodec {
        &self.common
    }

    pub fn private_packets(&self) -> &[SvcCodec] {
        &self.private
    }

    pub fn total_bits(&self) -> usize {
        self.common.config().capacity()
            + self
                .private
                .iter()
                .map(|p| p.config().capacity())
                .sum::<usize>()
    }

    pub fn total_subcarriers(&self) -> usize {
        self.common.config().m + self.private.iter().map(|p| p.config().m).sum::<usize>()
    }

    /// Sends one packet to one user over a fresh channel draw. With
    /// `channel_override` the given channel is used instead.
    fn deliver<R: Rng + ?Sized>(
        &self,
        codec: &SvcCodec,
        ofdm: &Ofdm,
        bits: &[bool],
        sigma2: f64,
        rng: &mut R,
        identity: bool,
    ) -> Result<bool> {
        let s = codec.svc_encode(bits)?;
        let x = codec.codebook().spread(&s)?;
        let m = ofdm.subcarriers();
        let channel = if identity {
            ChannelRealization::identity(m)
        } else {
            realize_channel(rng, 1, self.l_ch, m, ofdm.cp_len())?.remove(0)
        };
        let y = ofdm.transmit(&x, &channel, sigma2, rng)?;
        let phi = codec.effective_matrix(&channel)?;
        Ok(match codec.svc_decode(&y, phi.as_view()) {
            Ok(decoded) => decoded == bits,
            Err(HsvcError::DecodeFailure(_) | HsvcError::Singular(_)) => false,
            Err(e) => return Err(e),
        })
    }

    fn run_inner<R: Rng + ?Sized>(
        &self,
        common_bits: &[bool],
        private_bits: &[Vec<bool>],
        sigma2: f64,
        rng: &mut R,
        identity: bool,
    ) -> Result<Vec<bool>> {
        if private_bits.len() != self.private.len() {
            bail!(
                InvalidInput,
                "{} private streams for {} users",
                private_bits.len(),
                self.private.len()
            );
        }
        let mut errors = Vec::with_capacity(self.private.len());
        for (u, bits) in private_bits.iter().enumerate() {
            let common_ok = self.deliver(
                &self.common,
                &self.common_ofdm,
                common_bits,
                sigma2,
                rng,
                identity,
            )?;
            let private_ok = self.deliver(
                &self.private[u],
                &self.private_ofdm[u],
                bits,
                sigma2,
                rng,
                identity,
            )?;
            errors.push(!(common_ok && private_ok));
        }
        Ok(errors)
    }

    /// One session over Rayleigh channels; returns a per-user error flag.
    pub fn run<R: Rng + ?Sized>(
        &self,
        common_bits: &[bool],
        private_bits: &[Vec<bool>],
        sigma2: f64,
        rng: &mut R,
    ) -> Result<Vec<bool>> {
        self.run_inner(common_bits, private_bits, sigma2, rng, false)
    }

    /// One session over identity channels.
    pub fn run_identity<R: Rng + ?Sized>(
        &self,
        common_bits: &[bool],
        private_bits: &[Vec<bool>],
        sigma2: f64,
        rng: &mut R,
    ) -> Result<Vec<bool>> {
        self.run_inner(common_bits, private_bits, sigma2, rng, true)
    }
}
