//! HSVC encoder and successive decoder.
//!
//! Encoding: the common bits pick `U` active sections; the chosen sections,
//! in ascending order, go to the users sorted by descending block length.
//! Inside its section each user's leading `b_{u,1}` bits pick the block
//! placement and the remaining bits are modulated onto the blocks, left to
//! right.
//!
//! Decoding for user `u`: a section-level BOMP search (beam of
//! [`COMMON_BEAM`] paths, then single-section swap refinement) recovers the
//! active set and with it the common bits. Users are then peeled off in
//! descending block energy `K_v·L_v`: at each step every still-unclaimed
//! active section is searched with MBOMP for the current user's block
//! length, the best-fitting section is claimed, and the residual becomes the
//! joint least-squares residual over all claimed blocks. A refinement pass
//! re-searches each user, and each pair of users with exchanged sections,
//! against the signal with every other user's fit removed, then moves single
//! blocks within their sections, keeping changes that lower the joint
//! residual. Symbol values come from the final joint fit.

use nalgebra::{DMatrix, DMatrixView};
use num_bigint::BigUint;
use rand::Rng;

use crate::channel::{effective_matrix, ChannelRealization};
use crate::combinadics::{
    bits_to_rank, rank_block_placement, rank_combination, rank_to_bits, unrank_block_placement,
    unrank_combination, BlockPlacement, CombinationSet,
};
use crate::config::{Capacity, HsvcConfig};
use crate::error::{bail, HsvcError, Result};
use crate::modem::Constellation;
use crate::rng::random_bits;
use crate::sparse_recovery::{
    bomp_refine, bomp_with_beam, fit_blocks, mbomp, Basis, Block, LsFit, RecoveryResult,
};
use crate::spreading::Codebook;
use crate::C64;

/// Paths kept by the section-level search.
pub const COMMON_BEAM: usize = 4;

/// Residual drop, relative to `‖y‖²`, below which a block move is ignored.
const MOVE_TOL: f64 = 1e-12;

/// Passes of the private-stage refinement.
pub const REFINE_SWEEPS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Payload {
    pub common_bits: Vec<bool>,
    pub private_bits: Vec<Vec<bool>>,
}

impl Payload {
    pub fn random<R: Rng + ?Sized>(rng: &mut R, capacity: &Capacity) -> Self {
        Self {
            common_bits: random_bits(rng, capacity.common_bits),
            private_bits: capacity
                .users
                .iter()
                .map(|u| random_bits(rng, u.total()))
                .collect(),
        }
    }

    pub fn check(&self, capacity: &Capacity) -> Result<()> {
        if self.common_bits.len() != capacity.common_bits {
            bail!(
                InvalidInput,
                "{} common bits, capacity is {}",
                self.common_bits.len(),
                capacity.common_bits
            );
        }
        if self.private_bits.len() != capacity.users.len() {
            bail!(
                InvalidInput,
                "{} private streams for {} users",
                self.private_bits.len(),
                capacity.users.len()
            );
        }
        for (u, (bits, cap)) in self.private_bits.iter().zip(&capacity.users).enumerate() {
            if bits.len() != cap.total() {
                bail!(
                    InvalidInput,
                    "user {u}: {} private bits, capacity is {}",
                    bits.len(),
                    cap.total()
                );
            }
        }
        Ok(())
    }
}

/// Encoded length-`N` vector with its support structure.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    pub values: Vec<C64>,
    pub active_sections: CombinationSet,
    /// Section index owned by each user.
    pub section_of_user: Vec<usize>,
    /// Block placement of each user inside its section.
    pub placements: Vec<BlockPlacement>,
}

impl SparseVector {
    /// Checks the structural invariants against `config`.
    pub fn validate(&self, config: &HsvcConfig) -> Result<()> {
        let d = config.d;
        if self.values.len() != config.n {
            bail!(
                InvalidInput,
                "vector length {} != N={}",
                self.values.len(),
                config.n
            );
        }
        let mut owned = self.section_of_user.clone();
        owned.sort_unstable();
        if owned != self.active_sections.members() {
            bail!(
                InvalidInput,
                "user sections {:?} differ from active set",
                self.section_of_user
            );
        }
        let mut expected = vec![false; config.n];
        for (u, spec) in config.users.iter().enumerate() {
            let p = &self.placements[u];
            if p.count() != spec.k || p.block_len() != spec.l || p.section_len() != d {
                bail!(
                    InvalidInput,
                    "user {u} placement {p:?} does not match K={}, L={}",
                    spec.k,
                    spec.l
                );
            }
            for pos in p.positions() {
                expected[self.section_of_user[u] * d + pos] = true;
            }
        }
        let nonzero = self.values.iter().filter(|v| v.norm() > 0.0).count();
        if nonzero != config.k_non() {
            bail!(
                InvalidInput,
                "{nonzero} non-zeros, expected K_non={}",
                config.k_non()
            );
        }
        if self
            .values
            .iter()
            .zip(&expected)
            .any(|(v, &on)| (v.norm() > 0.0) != on)
        {
            bail!(InvalidInput, "non-zeros outside the declared blocks");
        }
        Ok(())
    }

    /// `Σ |s_j|²` over one section.
    pub fn section_energy(&self, section: usize, d: usize) -> f64 {
        self.values[section * d..(section + 1) * d]
            .iter()
            .map(|v| v.norm_sqr())
            .sum()
    }
}

/// One cancellation step of the private decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct SicStep {
    pub user: usize,
    pub section: usize,
    pub residual_norm2: f64,
}

/// Private decode of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivateDecode {
    pub section: usize,
    pub placement: BlockPlacement,
    pub bits: Vec<bool>,
    pub steps: Vec<SicStep>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodeStatus {
    Ok,
    Failure(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub user: usize,
    pub status: DecodeStatus,
    pub common_bits: Vec<bool>,
    pub private_bits: Vec<bool>,
    pub detected_sections: Option<CombinationSet>,
    pub support: Option<BlockPlacement>,
    pub common_residual_norm2: Option<f64>,
    pub sic_steps: Vec<SicStep>,
}

impl DecodeResult {
    fn failure(user: usize, err: HsvcError) -> Self {
        Self {
            user,
            status: DecodeStatus::Failure(err.to_string()),
            common_bits: Vec::new(),
            private_bits: Vec::new(),
            detected_sections: None,
            support: None,
            common_residual_norm2: None,
            sic_steps: Vec::new(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == DecodeStatus::Ok
    }

    /// True when both layers of this user's packet came through intact.
    pub fn matches(&self, payload: &Payload) -> bool {
        self.is_ok()
            && self.common_bits == payload.common_bits
            && self.private_bits == payload.private_bits[self.user]
    }
}

/// Encoder/decoder for one configuration. Immutable once built.
#[derive(Debug, Clone)]
pub struct HsvcCodec {
    config: HsvcConfig,
    capacity: Capacity,
    codebook: Codebook,
    constellation: Constellation,
}

impl HsvcCodec {
    pub fn new(config: HsvcConfig) -> Result<Self> {
        config.validate()?;
        let capacity = config.capacity()?;
        let codebook =
            Codebook::generate(config.codebook_seed, config.m, config.n, config.k_non())?
                .with_section_len(config.d)?;
        let constellation =
            Constellation::new(config.mod_order).map_err(|e| HsvcError::Config(e.to_string()))?;
        Ok(Self {
            config,
            capacity,
            codebook,
            constellation,
        })
    }

    pub fn config(&self) -> &HsvcConfig {
        &self.config
    }

    pub fn capacity(&self) -> &Capacity {
        &self.capacity
    }

    pub fn codebook(&self) -> &Codebook {
        &self.codebook
    }

    pub fn constellation(&self) -> &Constellation {
        &self.constellation
    }

    /// Users by descending block length; the i-th takes the i-th lowest active section.
    pub fn assignment_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.config.u()).collect();
        order.sort_by(|&a, &b| {
            self.config.users[b]
                .l
                .cmp(&self.config.users[a].l)
                .then(a.cmp(&b))
        });
        order
    }

    /// Users by descending block energy `K·L`, then descending `L`.
    pub fn sic_order(&self) -> Vec<usize> {
        let users = &self.config.users;
        let mut order: Vec<usize> = (0..users.len()).collect();
        order.sort_by(|&a, &b| {
            (users[b].k * users[b].l)
                .cmp(&(users[a].k * users[a].l))
                .then(users[b].l.cmp(&users[a].l))
                .then(a.cmp(&b))
        });
        order
    }

    /// `Φ_u = diag(H_u)·G` for one user's channel.
    pub fn effective_matrix(&self, channel: &ChannelRealization) -> Result<DMatrix<C64>> {
        effective_matrix(&self.codebook, channel)
    }

    pub fn encode(&self, payload: &Payload) -> Result<SparseVector> {
        payload.check(&self.capacity)?;
        let cfg = &self.config;
        let active = unrank_combination(&bits_to_rank(&payload.common_bits), cfg.s, cfg.u())?;

        let mut section_of_user = vec![0; cfg.u()];
        for (slot, user) in self.assignment_order().into_iter().enumerate() {
            section_of_user[user] = active.members()[slot];
        }

        let mut values = vec![C64::new(0.0, 0.0); cfg.n];
        let mut placements = Vec::with_capacity(cfg.u());
        for (u, spec) in cfg.users.iter().enumerate() {
            let (index_bits, symbol_bits) =
                payload.private_bits[u].split_at(self.capacity.users[u].index_bits);
            let placement =
                unrank_block_placement(&bits_to_rank(index_bits), cfg.d, spec.k, spec.l)?;
            let symbols = self.constellation.modulate(symbol_bits)?;
            let base = section_of_user[u] * cfg.d;
            for (pos, sym) in placement.positions().zip(symbols) {
                values[base + pos] = sym;
            }
            placements.push(placement);
        }
        Ok(SparseVector {
            values,
            active_sections: active,
            section_of_user,
            placements,
        })
    }

    /// Spreads an encoded vector onto the `M` subcarriers.
    pub fn spread(&self, s: &SparseVector) -> Result<Vec<C64>> {
        self.codebook.spread(&s.values)
    }

    fn check_observation(&self, y: &[C64], phi: DMatrixView<'_, C64>) -> Result<()> {
        if phi.shape() != (self.config.m, self.config.n) || y.len() != self.config.m {
            bail!(
                InvalidParameter,
                "expected y of length {} and a {}x{} measurement matrix",
                self.config.m,
                self.config.m,
                self.config.n
            );
        }
        Ok(())
    }

    /// Section-level BOMP; returns the active set, common bits and the BOMP result.
    pub fn decode_common(
        &self,
        y: &[C64],
        phi: DMatrixView<'_, C64>,
    ) -> Result<(CombinationSet, Vec<bool>, RecoveryResult)> {
        self.check_observation(y, phi)?;
        let cfg = &self.config;
        let found = bomp_with_beam(y, phi, cfg.d, cfg.u(), COMMON_BEAM)?;
        let found = bomp_refine(y, phi, cfg.d, found, COMMON_BEAM, REFINE_SWEEPS)?;
        let sections: Vec<usize> = found.support.starts().iter().map(|s| s / cfg.d).collect();
        let set = CombinationSet::new(sections, cfg.s)?;
        let rank = rank_combination(&set);
        let bits = checked_bits(&rank, self.capacity.common_bits, "section set")?;
        Ok((set, bits, found))
    }

    /// SIC-ordered private decode of `target` given the detected active sections.
    pub fn decode_private(
        &self,
        y: &[C64],
        phi: DMatrixView<'_, C64>,
        detected: &CombinationSet,
        target: usize,
    ) -> Result<PrivateDecode> {
        if target >= self.config.u() {
            bail!(
                InvalidParameter,
                "user {target} out of range (U={})",
                self.config.u()
            );
        }
        let (claims, joint, steps) = self.attribute(y, phi, detected)?;
        self.private_of(&claims, &joint, &steps, target)
    }

    /// Attributes every detected section to a user and fits all blocks jointly.
    fn attribute(
        &self,
        y: &[C64],
        phi: DMatrixView<'_, C64>,
        detected: &CombinationSet,
    ) -> Result<(Vec<Claim>, LsFit, Vec<SicStep>)> {
        self.check_observation(y, phi)?;
        let cfg = &self.config;
        if detected.cardinality() != cfg.u() || detected.universe() != cfg.s {
            bail!(
                InvalidParameter,
                "detected set {:?} is not a {}-of-{} selection",
                detected.members(),
                cfg.u(),
                cfg.s
            );
        }

        let d = cfg.d;
        let mut residual = y.to_vec();
        let mut unclaimed: Vec<usize> = detected.members().to_vec();
        let mut steps = Vec::new();
        let mut claims: Vec<Claim> = Vec::with_capacity(cfg.u());
        let mut joint: Option<LsFit> = None;
        for user in self.sic_order() {
            let spec = cfg.users[user];
            let mut best: Option<(usize, RecoveryResult)> = None;
            for &p in &unclaimed {
                let Ok(fit) = mbomp(&residual, phi.columns(p * d, d), spec.l, spec.k) else {
                    continue;
                };
                if best
                    .as_ref()
                    .is_none_or(|(_, b)| fit.residual_norm2 < b.residual_norm2)
                {
                    best = Some((p, fit));
                }
            }
            let Some((section, fit)) = best else {
                bail!(DecodeFailure, "no section fits user {user}'s blocks");
            };
            unclaimed.retain(|&p| p != section);
            claims.push(Claim {
                user,
                section,
                blocks: fit.support.blocks().to_vec(),
            });
            let fit = joint_fit(y, phi, d, &claims)?;
            steps.push(SicStep {
                user,
                section,
                residual_norm2: fit.residual_norm2,
            });
            residual = fit.residual.clone();
            joint = Some(fit);
        }
        let mut joint = joint.expect("at least one user");

        // Re-search each user's blocks, then each pair of users with their
        // sections exchanged, with every other user's fitted signal removed.
        // A change is kept only if the joint residual drops.
        for _ in 0..REFINE_SWEEPS {
            let mut changed = false;
            let mut moves: Vec<(usize, usize)> = (0..claims.len()).map(|i| (i, i)).collect();
            moves
                .extend((0..claims.len()).flat_map(|i| (i + 1..claims.len()).map(move |j| (i, j))));
            for (i, j) in moves {
                let clean = remove_claims(y, phi, d, &claims, &joint.values, &[i, j]);
                let mut trial = claims.clone();
                trial[i].section = claims[j].section;
                trial[j].section = claims[i].section;
                // Search i, then j with i's fit removed, then i again with j's removed.
                let order = if i == j { vec![i] } else { vec![i, j, i] };
                let mut ok = true;
                for (step, &k) in order.iter().enumerate() {
                    let other = if step == 0 {
                        None
                    } else {
                        Some(order[step - 1])
                    };
                    let target = match other {
                        Some(o) => match subtract_fit(&clean, phi, d, &trial[o]) {
                            Ok(r) => r,
                            Err(_) => {
                                ok = false;
                                break;
                            }
                        },
                        None => clean.clone(),
                    };
                    let spec = cfg.users[trial[k].user];
                    match mbomp(
                        &target,
                        phi.columns(trial[k].section * d, d),
                        spec.l,
                        spec.k,
                    ) {
                        Ok(found) => trial[k].blocks = found.support.blocks().to_vec(),
                        Err(_) => {
                            ok = false;
                            break;
                        }
                    }
                }
                if !ok || trial == claims {
                    continue;
                }
                if let Ok(fit) = joint_fit(y, phi, d, &trial) {
                    if fit.residual_norm2 < joint.residual_norm2 {
                        claims = trial;
                        joint = fit;
                        changed = true;
                    }
                }
            }
            // Move single blocks to the best free start in their section.
            for i in 0..claims.len() {
                for b in 0..claims[i].blocks.len() {
                    let Some(trial) = block_move(y, phi, d, &claims, i, b, joint.residual_norm2)
                    else {
                        continue;
                    };
                    if let Ok(fit) = joint_fit(y, phi, d, &trial) {
                        if fit.residual_norm2 < joint.residual_norm2 {
                            claims = trial;
                            joint = fit;
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }

        Ok((claims, joint, steps))
    }

    fn private_of(
        &self,
        claims: &[Claim],
        joint: &LsFit,
        steps: &[SicStep],
        target: usize,
    ) -> Result<PrivateDecode> {
        let (cfg, d) = (&self.config, self.config.d);
        let mut offset = 0;
        for claim in claims {
            let count: usize = claim.blocks.iter().map(|b| b.len).sum();
            if claim.user == target {
                let placement = BlockPlacement::new(
                    claim.blocks.iter().map(|b| b.start).collect(),
                    cfg.users[target].l,
                    d,
                )?;
                let rank = rank_block_placement(&placement)?;
                let mut bits = checked_bits(
                    &rank,
                    self.capacity.users[target].index_bits,
                    "block placement",
                )?;
                bits.extend(
                    self.constellation
                        .demodulate(&joint.values[offset..offset + count]),
                );
                return Ok(PrivateDecode {
                    section: claim.section,
                    placement,
                    bits,
                    steps: steps.to_vec(),
                });
            }
            offset += count;
        }
        unreachable!("target user is always in the SIC order")
    }

    /// Full decode for `user`; failures are reported in the status, never raised.
    pub fn decode(&self, y: &[C64], phi: DMatrixView<'_, C64>, user: usize) -> DecodeResult {
        if user >= self.config.u() {
            let err = HsvcError::InvalidParameter(format!(
                "user {user} out of range (U={})",
                self.config.u()
            ));
            return DecodeResult::failure(user, err);
        }
        self.decode_users(y, phi, &[user]).remove(0)
    }

    /// Decodes every user from one observation, sharing the common and SIC
    /// stages. Equivalent to [`HsvcCodec::decode`] per user when all users see
    /// the same `phi`.
    pub fn decode_all(&self, y: &[C64], phi: DMatrixView<'_, C64>) -> Vec<DecodeResult> {
        let users: Vec<usize> = (0..self.config.u()).collect();
        self.decode_users(y, phi, &users)
    }

    fn decode_users(
        &self,
        y: &[C64],
        phi: DMatrixView<'_, C64>,
        users: &[usize],
    ) -> Vec<DecodeResult> {
        let (sections, common_bits, common_fit) = match self.decode_common(y, phi) {
            Ok(v) => v,
            Err(e) => {
                return users
                    .iter()
                    .map(|&u| DecodeResult::failure(u, e.clone()))
                    .collect()
            }
        };
        let attributed = self.attribute(y, phi, &sections);
        users
            .iter()
            .map(|&user| {
                let private = match &attributed {
                    Ok((claims, joint, steps)) => self.private_of(claims, joint, steps, user),
                    Err(e) => Err(e.clone()),
                };
                match private {
                    Ok(private) => DecodeResult {
                        user,
                        status: DecodeStatus::Ok,
                        common_bits: common_bits.clone(),
                        private_bits: private.bits,
                        detected_sections: Some(sections.clone()),
                        support: Some(private.placement),
                        common_residual_norm2: Some(common_fit.residual_norm2),
                        sic_steps: private.steps,
                    },
                    Err(e) => DecodeResult {
                        detected_sections: Some(sections.clone()),
                        common_bits: common_bits.clone(),
                        common_residual_norm2: Some(common_fit.residual_norm2),
                        ..DecodeResult::failure(user, e)
                    },
                }
            })
            .collect()
    }
}

/// One user's blocks as attributed by the private decoder, in section coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Claim {
    user: usize,
    section: usize,
    blocks: Vec<Block>,
}

/// Joint least-squares fit of `y` on every claimed block; values follow claim order.
fn joint_fit(y: &[C64], phi: DMatrixView<'_, C64>, d: usize, claims: &[Claim]) -> Result<LsFit> {
    let blocks: Vec<Block> = claims
        .iter()
        .flat_map(|c| {
            c.blocks
                .iter()
                .map(move |b| Block::new(c.section * d + b.start, b.len))
        })
        .collect();
    fit_blocks(y, phi, &blocks).map_err(|e| HsvcError::DecodeFailure(e.to_string()))
}

/// Claims with block `b` of claim `i` moved to the start that minimises the
/// joint residual, when that beats `current` by more than round-off.
fn block_move(
    y: &[C64],
    phi: DMatrixView<'_, C64>,
    d: usize,
    claims: &[Claim],
    i: usize,
    b: usize,
    current: f64,
) -> Option<Vec<Claim>> {
    let global = |c: &Claim, blk: &Block| Block::new(c.section * d + blk.start, blk.len);
    let fixed: Vec<Block> = claims
        .iter()
        .enumerate()
        .flat_map(|(j, c)| {
            c.blocks
                .iter()
                .enumerate()
                .filter(move |&(k, _)| (j, k) != (i, b))
                .map(move |(_, blk)| global(c, blk))
        })
        .collect();
    let (basis, partial) = Basis::residual_of(phi, y, &fixed)?;
    let claim = &claims[i];
    let moving = claim.blocks[b];
    let y2: f64 = y.iter().map(|z| z.norm_sqr()).sum();
    let mut best: Option<(f64, usize)> = None;
    for start in 0..=d - moving.len {
        let cand = Block::new(start, moving.len);
        if start == moving.start
            || claim
                .blocks
                .iter()
                .enumerate()
                .any(|(k, o)| k != b && o.overlaps(&cand))
        {
            continue;
        }
        let Some(grown) = basis.extend(phi, global(claim, &cand)) else {
            continue;
        };
        let mut r = partial.clone();
        grown.project_out(basis.cols(), &mut r);
        let r2: f64 = r.iter().map(|z| z.norm_sqr()).sum();
        if r2 < current - MOVE_TOL * y2 && best.is_none_or(|(v, _)| r2 < v) {
            best = Some((r2, start));
        }
    }
    let (_, start) = best?;
    let mut trial = claims.to_vec();
    trial[i].blocks[b].start = start;
    trial[i].blocks.sort();
    Some(trial)
}

/// `r` minus its least-squares fit on one claim's blocks.
fn subtract_fit(r: &[C64], phi: DMatrixView<'_, C64>, d: usize, claim: &Claim) -> Result<Vec<C64>> {
    Ok(joint_fit(r, phi, d, std::slice::from_ref(claim))?.residual)
}

/// `y` minus the fitted contribution of every claim not listed in `keep`.
fn remove_claims(
    y: &[C64],
    phi: DMatrixView<'_, C64>,
    d: usize,
    claims: &[Claim],
    values: &[C64],
    keep: &[usize],
) -> Vec<C64> {
    let mut clean = y.to_vec();
    let mut offset = 0;
    for (j, claim) in claims.iter().enumerate() {
        for b in &claim.blocks {
            if !keep.contains(&j) {
                for (k, col) in
                    (claim.section * d + b.start..claim.section * d + b.end()).enumerate()
                {
                    let v = values[offset + k];
                    clean
                        .iter_mut()
                        .zip(phi.column(col).iter())
                        .for_each(|(c, a)| *c -= a * v);
                }
            }
            offset += b.len;
        }
    }
    clean
}

/// `rank` as `width` bits; a rank past the used range is a decode failure.
fn checked_bits(rank: &BigUint, width: usize, what: &str) -> Result<Vec<bool>> {
    rank_to_bits(rank, width).map_err(|_| {
        HsvcError::DecodeFailure(format!(
            "{what} rank {rank} is outside the {width}-bit codeword range"
        ))
    })
}
