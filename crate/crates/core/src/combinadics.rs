//! Bijections between bit strings and combinatorial objects.
//!
//! Two objects are ranked here: unordered `k`-subsets of `{0, .., n-1}`
//! (which sections are active) and non-overlapping placements of `K`
//! equal-length blocks inside a section (where a user's blocks sit).
//! Ranks follow lexicographic order over sorted, 0-based subsets, and bit
//! strings are read MSB-first as the rank integer.
//!
//! All binomials are exact big integers, and capacities come from the
//! integer bit length so that `⌊log₂ C(n, k)⌋` never mis-rounds near a power
//! of two.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{bail, Result};

/// Exact binomial coefficient `C(n, k)`; zero when `k > n`.
pub fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 1..=k {
        // acc * (n - k + i) is divisible by i at every step.
        acc *= n - k + i;
        acc /= i;
    }
    acc
}

/// `⌊log₂ x⌋` for `x ≥ 1`.
fn floor_log2(x: &BigUint) -> usize {
    debug_assert!(!x.is_zero());
    (x.bits() - 1) as usize
}

/// Number of common bits carried by choosing `u` of `s` sections.
pub fn common_capacity(s: usize, u: usize) -> Result<usize> {
    if u == 0 || u >= s {
        bail!(
            InvalidParameter,
            "common capacity needs 0 < U < S, got U={u}, S={s}"
        );
    }
    Ok(floor_log2(&binomial(s, u)))
}

/// Free slots left when `k` blocks of length `l` are collapsed to single
/// positions inside a section of length `d`, i.e. `D - K(L-1)`.
fn placement_universe(d: usize, k: usize, l: usize) -> Result<usize> {
    if k == 0 || l == 0 || d == 0 {
        bail!(
            InvalidParameter,
            "block placement needs D, K, L > 0, got D={d}, K={k}, L={l}"
        );
    }
    match d.checked_sub(k * (l - 1)) {
        Some(free) if free >= k => Ok(free),
        _ => bail!(
            InvalidParameter,
            "{k} blocks of length {l} do not fit in a section of length {d}"
        ),
    }
}

/// Number of placements of `k` non-overlapping length-`l` blocks in `d` slots.
pub fn placement_count(d: usize, k: usize, l: usize) -> Result<BigUint> {
    let free = placement_universe(d, k, l)?;
    Ok(binomial(free, k))
}

/// Number of private bits carried by the block positions of one user.
pub fn private_index_capacity(d: usize, k: usize, l: usize) -> Result<usize> {
    Ok(floor_log2(&placement_count(d, k, l)?))
}

/// `log₂` of a modulation order, rejecting anything that is not a power of two ≥ 2.
pub fn bits_per_symbol(mod_order: usize) -> Result<usize> {
    if mod_order < 2 || !mod_order.is_power_of_two() {
        bail!(
            InvalidParameter,
            "modulation order must be a power of two >= 2, got {mod_order}"
        );
    }
    Ok(mod_order.trailing_zeros() as usize)
}

/// Number of private bits carried by the `k·l` modulated symbols of one user.
pub fn qam_capacity(k: usize, l: usize, mod_order: usize) -> Result<usize> {
    Ok(k * l * bits_per_symbol(mod_order)?)
}

/// A sorted `k`-subset of `{0, .., universe-1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CombinationSet {
    members: Vec<usize>,
    universe: usize,
}

impl CombinationSet {
    pub fn new(members: Vec<usize>, universe: usize) -> Result<Self> {
        if members.is_empty() {
            bail!(
                InvalidParameter,
                "combination must have at least one member"
            );
        }
        if members.len() > universe {
            bail!(
                InvalidParameter,
                "{} members exceed universe {universe}",
                members.len()
            );
        }
        if members.windows(2).any(|w| w[0] >= w[1]) {
            bail!(
                InvalidParameter,
                "members {members:?} are not strictly increasing"
            );
        }
        if members.last().is_some_and(|&m| m >= universe) {
            bail!(
                InvalidParameter,
                "members {members:?} exceed universe {universe}"
            );
        }
        Ok(Self { members, universe })
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn cardinality(&self) -> usize {
        self.members.len()
    }
}

/// The `rank`-th `k`-subset of `{0, .., n-1}` in lexicographic order.
pub fn unrank_combination(rank: &BigUint, n: usize, k: usize) -> Result<CombinationSet> {
    if k == 0 || k > n {
        bail!(InvalidParameter, "cannot choose {k} of {n}");
    }
    let total = binomial(n, k);
    if rank >= &total {
        bail!(OutOfRange, "rank {rank} >= C({n},{k}) = {total}");
    }
    let mut rank = rank.clone();
    let mut members = Vec::with_capacity(k);
    let mut next = 0usize;
    for i in 0..k {
        let remaining = k - 1 - i;
        if remaining == 0 {
            // Every candidate heads exactly one completion.
            let offset = rank.to_usize().expect("rank fits below n");
            members.push(next + offset);
            break;
        }
        loop {
            let count = binomial(n - 1 - next, remaining);
            if rank < count {
                members.push(next);
                next += 1;
                break;
            }
            rank -= count;
            next += 1;
        }
    }
    CombinationSet::new(members, n)
}

/// Lexicographic rank of a combination; inverse of [`unrank_combination`].
pub fn rank_combination(set: &CombinationSet) -> BigUint {
    let n = set.universe;
    let k = set.members.len();
    let mut rank = BigUint::zero();
    let mut next = 0usize;
    for (i, &m) in set.members.iter().enumerate() {
        let remaining = k - 1 - i;
        // Σ_{c=next}^{m-1} C(n-1-c, remaining) = C(n-next, remaining+1) - C(n-m, remaining+1)
        if m > next {
            rank += binomial(n - next, remaining + 1) - binomial(n - m, remaining + 1);
        }
        next = m + 1;
    }
    rank
}

/// Start positions of `count` non-overlapping blocks of `block_len` inside a
/// section of `section_len` positions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BlockPlacement {
    starts: Vec<usize>,
    block_len: usize,
    section_len: usize,
}

impl BlockPlacement {
    pub fn new(starts: Vec<usize>, block_len: usize, section_len: usize) -> Result<Self> {
        if starts.is_empty() || block_len == 0 {
            bail!(
                InvalidParameter,
                "placement needs at least one block of positive length"
            );
        }
        if starts.windows(2).any(|w| w[1] < w[0] + block_len) {
            bail!(
                InvalidParameter,
                "starts {starts:?} overlap or are unsorted for block length {block_len}"
            );
        }
        if starts.last().is_some_and(|&s| s + block_len > section_len) {
            bail!(
                InvalidParameter,
                "starts {starts:?} run past section length {section_len} (block length {block_len})"
            );
        }
        Ok(Self {
            starts,
            block_len,
            section_len,
        })
    }

    pub fn starts(&self) -> &[usize] {
        &self.starts
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn section_len(&self) -> usize {
        self.section_len
    }

    pub fn count(&self) -> usize {
        self.starts.len()
    }

    /// Every occupied position, block by block, left to right.
    pub fn positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.starts.iter().flat_map(move |&s| s..s + self.block_len)
    }
}

/// The `rank`-th placement, via the gap transform `start[i] = t[i] + i·(L-1)`.
pub fn unrank_block_placement(
    rank: &BigUint,
    d: usize,
    k: usize,
    l: usize,
) -> Result<BlockPlacement> {
    let free = placement_universe(d, k, l)?;
    let collapsed = unrank_combination(rank, free, k)?;
    let starts = collapsed
        .members()
        .iter()
        .enumerate()
        .map(|(i, &t)| t + i * (l - 1))
        .collect();
    BlockPlacement::new(starts, l, d)
}

/// Inverse of [`unrank_block_placement`].
pub fn rank_block_placement(p: &BlockPlacement) -> Result<BigUint> {
    let (k, l) = (p.count(), p.block_len);
    let free = placement_universe(p.section_len, k, l)?;
    let collapsed = p
        .starts
        .iter()
        .enumerate()
        .map(|(i, &s)| s - i * (l - 1))
        .collect();
    Ok(rank_combination(&CombinationSet::new(collapsed, free)?))
}

/// Reads a bit string MSB-first as an unsigned integer.
pub fn bits_to_rank(bits: &[bool]) -> BigUint {
    let mut rank = BigUint::zero();
    for &b in bits {
        rank <<= 1u32;
        if b {
            rank += 1u32;
        }
    }
    rank
}

/// Writes `rank` as exactly `width` bits, MSB-first.
pub fn rank_to_bits(rank: &BigUint, width: usize) -> Result<Vec<bool>> {
    if rank.bits() > width as u64 {
        bail!(OutOfRange, "rank {rank} does not fit in {width} bits");
    }
    Ok((0..width).rev().map(|i| rank.bit(i as u64)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn big(v: u64) -> BigUint {
        BigUint::from(v)
    }

    fn lex_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
        fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == k {
                out.push(cur.clone());
                return;
            }
            for c in start..n {
                cur.push(c);
                rec(c + 1, n, k, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        rec(0, n, k, &mut Vec::new(), &mut out);
        out
    }

    /// Brute force: all start vectors of k non-overlapping length-l blocks, lexicographic.
    fn brute_placements(d: usize, k: usize, l: usize) -> Vec<Vec<usize>> {
        lex_subsets(d, k)
            .into_iter()
            .filter(|s| s.windows(2).all(|w| w[1] >= w[0] + l) && s.last().unwrap() + l <= d)
            .collect()
    }

    #[test]
    fn capacities_match_worked_examples() {
        assert_eq!(common_capacity(4, 2).unwrap(), 2);
        assert_eq!(common_capacity(65, 2).unwrap(), 11);
        assert_eq!(common_capacity(2, 1).unwrap(), 1);
        assert_eq!(private_index_capacity(9, 1, 4).unwrap(), 2);
        assert_eq!(private_index_capacity(9, 1, 2).unwrap(), 3);
        assert_eq!(private_index_capacity(2, 1, 2).unwrap(), 0);
        assert_eq!(qam_capacity(1, 4, 4).unwrap(), 8);
        assert_eq!(qam_capacity(1, 2, 2).unwrap(), 2);
        assert_eq!(qam_capacity(1, 1, 2).unwrap(), 1);
    }

    #[test]
    fn capacity_errors() {
        assert!(common_capacity(4, 4).is_err());
        assert!(common_capacity(4, 0).is_err());
        assert!(private_index_capacity(5, 2, 3).is_err());
        assert!(qam_capacity(1, 1, 6).is_err());
        assert!(qam_capacity(1, 1, 1).is_err());
    }

    #[test]
    fn exact_log_near_powers_of_two() {
        // C(33,2) = 528, C(32,2) = 496: straddles 512.
        assert_eq!(common_capacity(32, 2).unwrap(), 8);
        assert_eq!(common_capacity(33, 2).unwrap(), 9);
        // C(1024,1) is exactly a power of two.
        assert_eq!(common_capacity(1024, 1).unwrap(), 10);
        assert_eq!(common_capacity(1023, 1).unwrap(), 9);
    }

    #[test]
    fn capacities_agree_with_enumeration() {
        for d in 1..=14 {
            for k in 1..=3 {
                for l in 1..=5 {
                    let count = brute_placements(d, k, l).len();
                    match private_index_capacity(d, k, l) {
                        Ok(bits) => {
                            assert!(count >= 1);
                            assert_eq!(bits, (usize::BITS - 1 - count.leading_zeros()) as usize);
                        }
                        Err(_) => assert_eq!(count, 0, "D={d} K={k} L={l}"),
                    }
                }
            }
        }
        for s in 2..=14 {
            for u in 1..s {
                let count = lex_subsets(s, u).len();
                let expect = (usize::BITS - 1 - count.leading_zeros()) as usize;
                assert_eq!(common_capacity(s, u).unwrap(), expect);
            }
        }
    }

    #[test]
    fn index_capacity_non_increasing_in_block_length() {
        for d in 1..=20 {
            for k in 1..=4 {
                let caps: Vec<usize> = (1..=d)
                    .map_while(|l| private_index_capacity(d, k, l).ok())
                    .collect();
                assert!(
                    caps.windows(2).all(|w| w[1] <= w[0]),
                    "D={d} K={k}: {caps:?}"
                );
            }
        }
    }

    #[test]
    fn unrank_examples() {
        assert_eq!(
            unrank_combination(&big(0), 4, 2).unwrap().members(),
            &[0, 1]
        );
        assert_eq!(
            unrank_combination(&big(2), 4, 2).unwrap().members(),
            &[0, 3]
        );
        assert_eq!(
            unrank_combination(&big(5), 4, 2).unwrap().members(),
            &[2, 3]
        );
        assert!(matches!(
            unrank_combination(&big(6), 4, 2),
            Err(crate::HsvcError::OutOfRange(_))
        ));
    }

    #[test]
    fn rank_examples() {
        let set = |m: Vec<usize>| CombinationSet::new(m, 4).unwrap();
        assert_eq!(rank_combination(&set(vec![0, 1])), big(0));
        assert_eq!(rank_combination(&set(vec![0, 3])), big(2));
        assert_eq!(rank_combination(&set(vec![2, 3])), big(5));
    }

    #[test]
    fn malformed_sets_rejected() {
        assert!(CombinationSet::new(vec![1, 1], 4).is_err());
        assert!(CombinationSet::new(vec![2, 1], 4).is_err());
        assert!(CombinationSet::new(vec![0, 4], 4).is_err());
        assert!(CombinationSet::new(vec![], 4).is_err());
        assert!(BlockPlacement::new(vec![0, 1], 2, 6).is_err());
        assert!(BlockPlacement::new(vec![5], 2, 6).is_err());
    }

    #[test]
    fn combination_ranking_matches_lexicographic_enumeration() {
        for n in 1..=10 {
            for k in 1..=n {
                for (r, subset) in lex_subsets(n, k).into_iter().enumerate() {
                    let set = unrank_combination(&big(r as u64), n, k).unwrap();
                    assert_eq!(set.members(), subset.as_slice());
                    assert_eq!(rank_combination(&set), big(r as u64));
                }
            }
        }
    }

    #[test]
    fn placement_examples() {
        assert_eq!(
            unrank_block_placement(&big(0), 9, 1, 4).unwrap().starts(),
            &[0]
        );
        assert_eq!(
            unrank_block_placement(&big(5), 9, 1, 4).unwrap().starts(),
            &[5]
        );
        // Brute force over the 6 placements of two 2-blocks in 6 slots:
        // [0,2] [0,3] [0,4] [1,3] [1,4] [2,4]
        let brute = brute_placements(6, 2, 2);
        assert_eq!(brute.len(), 6);
        assert_eq!(brute[5], vec![2, 4]);
        assert_eq!(
            unrank_block_placement(&big(5), 6, 2, 2).unwrap().starts(),
            &[2, 4]
        );

        let p = BlockPlacement::new(vec![0], 4, 9).unwrap();
        assert_eq!(rank_block_placement(&p).unwrap(), big(0));
        let p = BlockPlacement::new(vec![2], 2, 9).unwrap();
        assert_eq!(rank_block_placement(&p).unwrap(), big(2));
        assert!(unrank_block_placement(&big(6), 9, 1, 4).is_err());
    }

    #[test]
    fn placement_ranking_matches_enumeration() {
        for d in 1..=14 {
            for k in 1..=3 {
                for l in 1..=5 {
                    for (r, starts) in brute_placements(d, k, l).into_iter().enumerate() {
                        let p = unrank_block_placement(&big(r as u64), d, k, l).unwrap();
                        assert_eq!(p.starts(), starts.as_slice(), "D={d} K={k} L={l} r={r}");
                        assert_eq!(rank_block_placement(&p).unwrap(), big(r as u64));
                    }
                }
            }
        }
        // D=12, K=2, L=3: 28 placements.
        assert_eq!(brute_placements(12, 2, 3).len(), 28);
    }

    #[test]
    fn bit_conversion() {
        assert_eq!(bits_to_rank(&[true, false]), big(2));
        assert_eq!(rank_to_bits(&big(2), 2).unwrap(), vec![true, false]);
        assert_eq!(rank_to_bits(&big(1), 3).unwrap(), vec![false, false, true]);
        assert!(rank_to_bits(&big(4), 2).is_err());
        assert!(rank_to_bits(&big(0), 0).unwrap().is_empty());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn combination_round_trip(n in 1usize..200, k_frac in 0.0f64..1.0, r_frac in 0.0f64..1.0) {
                let k = 1 + ((n - 1) as f64 * k_frac) as usize;
                let total = binomial(n, k);
                // Scale a fraction of the total; exact enough for a random rank.
                let scaled = (r_frac * 1e15) as u64;
                let rank = (&total * BigUint::from(scaled)) / BigUint::from(1_000_000_000_000_000u64);
                let set = unrank_combination(&rank, n, k).unwrap();
                prop_assert_eq!(set.cardinality(), k);
                prop_assert_eq!(rank_combination(&set), rank);
            }

            #[test]
            fn placement_gaps_hold(d in 1usize..40, k in 1usize..5, l in 1usize..6, r_frac in 0.0f64..1.0) {
                if let Ok(total) = placement_count(d, k, l) {
                    let scaled = (r_frac * 1e12) as u64;
                    let rank = (&total * BigUint::from(scaled)) / BigUint::from(1_000_000_000_000u64);
                    let p = unrank_block_placement(&rank, d, k, l).unwrap();
                    prop_assert!(p.starts().windows(2).all(|w| w[1] >= w[0] + l));
                    prop_assert!(*p.starts().last().unwrap() <= d - l);
                    prop_assert_eq!(rank_block_placement(&p).unwrap(), rank);
                }
            }
        }
    }
}
