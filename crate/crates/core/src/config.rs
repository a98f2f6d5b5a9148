//! System configuration and its TOML file form.
//!
//! ```toml
//! n = 130              # sparse-vector length N
//! s = 65               # section count S
//! d = 2                # section length D (N = S·D)
//! m = 48               # subcarriers M
//! mod_order = 2        # BPSK = 2, square QAM = 4, 16, 64
//! cp_len = 8           # cyclic prefix, samples
//! l_ch = 4             # Rayleigh taps (uniform power profile)
//! codebook_seed = 1
//!
//! [[users]]            # one table per user, in user order
//! k = 1                # blocks K_u
//! l = 2                # block length L_u (distinct across users)
//!
//! [[users]]
//! k = 1
//! l = 1
//!
//! [baseline]           # optional: sequential single-layer SVC comparison
//! k = 2                # preferred non-zeros per packet
//! mod_order = 2
//! ```
//!
//! Unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::combinadics::{common_capacity, private_index_capacity, qam_capacity};
use crate::error::{bail, HsvcError, Result};

/// Per-user block geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    pub k: usize,
    pub l: usize,
}

/// Parameters of the sequential SVC comparison scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineParams {
    #[serde(default = "default_baseline_k")]
    pub k: usize,
    #[serde(default = "default_mod_order")]
    pub mod_order: usize,
}

fn default_baseline_k() -> usize {
    2
}

fn default_mod_order() -> usize {
    2
}

fn default_cp_len() -> usize {
    8
}

fn default_l_ch() -> usize {
    4
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self {
            k: default_baseline_k(),
            mod_order: default_mod_order(),
        }
    }
}

/// Full HSVC system parameterization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HsvcConfig {
    pub n: usize,
    pub s: usize,
    pub d: usize,
    pub m: usize,
    #[serde(default = "default_mod_order")]
    pub mod_order: usize,
    #[serde(default = "default_cp_len")]
    pub cp_len: usize,
    #[serde(default = "default_l_ch")]
    pub l_ch: usize,
    #[serde(default)]
    pub codebook_seed: u64,
    pub users: Vec<UserSpec>,
    #[serde(default)]
    pub baseline: Option<BaselineParams>,
}

/// Bit budget of one user.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UserCapacity {
    pub index_bits: usize,
    pub symbol_bits: usize,
}

impl UserCapacity {
    pub fn total(&self) -> usize {
        self.index_bits + self.symbol_bits
    }
}

/// Exact capacities of a configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Capacity {
    pub common_bits: usize,
    pub users: Vec<UserCapacity>,
}

impl Capacity {
    pub fn total(&self) -> usize {
        self.common_bits + self.users.iter().map(UserCapacity::total).sum::<usize>()
    }
}

impl HsvcConfig {
    pub fn u(&self) -> usize {
        self.users.len()
    }

    /// Total non-zero entries `Σ K_u·L_u`.
    pub fn k_non(&self) -> usize {
        self.users.iter().map(|u| u.k * u.l).sum()
    }

    pub fn baseline_params(&self) -> BaselineParams {
        self.baseline.unwrap_or_default()
    }

    /// Same geometry with a different subcarrier count.
    pub fn with_subcarriers(&self, m: usize) -> Self {
        Self { m, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let u = self.u();
        if self.n == 0 || self.s == 0 || self.d == 0 {
            bail!(Config, "N, S and D must be positive");
        }
        if self.n != self.s * self.d {
            bail!(
                Config,
                "N={} must equal S·D = {}·{}",
                self.n,
                self.s,
                self.d
            );
        }
        if u == 0 || u >= self.s {
            bail!(Config, "need 0 < U < S, got U={u}, S={}", self.s);
        }
        let mut lens: Vec<usize> = self.users.iter().map(|u| u.l).collect();
        lens.sort_unstable();
        if lens.windows(2).any(|w| w[0] == w[1]) {
            bail!(
                Config,
                "block lengths {lens:?} must be distinct across users"
            );
        }
        if u * self.d > self.m {
            bail!(
                Config,
                "M={} is below U·D = {}, sections cannot be resolved",
                self.m,
                u * self.d
            );
        }
        if self.l_ch == 0 || self.l_ch > self.cp_len.max(1) || self.l_ch > self.m {
            bail!(
                Config,
                "l_ch={} must be in 1..=cp_len ({}) and <= M",
                self.l_ch,
                self.cp_len
            );
        }
        self.capacity().map(|_| ())
    }

    pub fn capacity(&self) -> Result<Capacity> {
        let to_config = |e: HsvcError| HsvcError::Config(e.to_string());
        let common_bits = common_capacity(self.s, self.u()).map_err(to_config)?;
        let users = self
            .users
            .iter()
            .map(|u| {
                Ok(UserCapacity {
                    index_bits: private_index_capacity(self.d, u.k, u.l).map_err(to_config)?,
                    symbol_bits: qam_capacity(u.k, u.l, self.mod_order).map_err(to_config)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Capacity { common_bits, users })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| HsvcError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Two-user worked example: N=36, S=4, D=9, L = (4, 2), K = 1, 4-QAM.
    pub fn two_user_example() -> Self {
        Self {
            n: 36,
            s: 4,
            d: 9,
            m: 36,
            mod_order: 4,
            cp_len: 8,
            l_ch: 4,
            codebook_seed: 1,
            users: vec![UserSpec { k: 1, l: 4 }, UserSpec { k: 1, l: 2 }],
            baseline: None,
        }
    }

    /// Two-user short-packet geometry: N=130, S=65, D=2, L = (2, 1), K = 1, BPSK, 15 bits.
    pub fn short_packet_two_user() -> Self {
        Self {
            n: 130,
            s: 65,
            d: 2,
            m: 48,
            mod_order: 2,
            cp_len: 8,
            l_ch: 4,
            codebook_seed: 1,
            users: vec![UserSpec { k: 1, l: 2 }, UserSpec { k: 1, l: 1 }],
            baseline: None,
        }
    }

    /// Four-user geometry: N=1032, S=86, D=12, L = (6, 4, 3, 2), K = 1, BPSK.
    pub fn short_packet_four_user() -> Self {
        Self {
            n: 1032,
            s: 86,
            d: 12,
            m: 128,
            mod_order: 2,
            cp_len: 8,
            l_ch: 4,
            codebook_seed: 1,
            users: vec![
                UserSpec { k: 1, l: 6 },
                UserSpec { k: 1, l: 4 },
                UserSpec { k: 1, l: 3 },
                UserSpec { k: 1, l: 2 },
            ],
            baseline: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for cfg in [
            HsvcConfig::two_user_example(),
            HsvcConfig::short_packet_two_user(),
            HsvcConfig::short_packet_four_user(),
        ] {
            cfg.validate().unwrap();
        }
    }

    #[test]
    fn two_user_example_capacity() {
        let cap = HsvcConfig::two_user_example().capacity().unwrap();
        assert_eq!(cap.common_bits, 2);
        assert_eq!(cap.users[0].total(), 10);
        assert_eq!(cap.users[1].total(), 7);
    }

    #[test]
    fn short_packet_capacity_is_fifteen_bits() {
        let cap = HsvcConfig::short_packet_two_user().capacity().unwrap();
        assert_eq!(cap.common_bits, 11);
        assert_eq!(
            cap.users[0],
            UserCapacity {
                index_bits: 0,
                symbol_bits: 2
            }
        );
        assert_eq!(
            cap.users[1],
            UserCapacity {
                index_bits: 1,
                symbol_bits: 1
            }
        );
        assert_eq!(cap.total(), 15);
    }

    #[test]
    fn four_user_geometry_budget() {
        // C(86,4) = 2_123_555 >= 2^21 -> 21 common bits; index bits ⌊log2 7⌋, ⌊log2 9⌋, ⌊log2 10⌋, ⌊log2 11⌋.
        let cap = HsvcConfig::short_packet_four_user().capacity().unwrap();
        assert_eq!(cap.common_bits, 21);
        let idx: Vec<usize> = cap.users.iter().map(|u| u.index_bits).collect();
        assert_eq!(idx, vec![2, 3, 3, 3]);
        let sym: Vec<usize> = cap.users.iter().map(|u| u.symbol_bits).collect();
        assert_eq!(sym, vec![6, 4, 3, 2]);
        assert_eq!(cap.total(), 47);
    }

    #[test]
    fn validation_errors() {
        let base = HsvcConfig::two_user_example();
        let mut c = base.clone();
        c.n = 35;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.users[1].l = 4;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.users = (1..=4).map(|l| UserSpec { k: 1, l }).collect();
        assert!(c.validate().is_err(), "U = S");
        let mut c = base.clone();
        c.users[0].k = 3;
        assert!(c.validate().is_err(), "blocks do not fit");
        let mut c = base.clone();
        c.l_ch = 9;
        assert!(c.validate().is_err());
        let mut c = base;
        c.mod_order = 3;
        assert!(c.validate().is_err());
    }

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let cfg = HsvcConfig::short_packet_two_user();
        let text = cfg.to_toml_string();
        assert_eq!(HsvcConfig::from_toml_str(&text).unwrap(), cfg);
        let bad = format!("{text}\nbogus = 1\n");
        assert!(matches!(
            HsvcConfig::from_toml_str(&bad),
            Err(HsvcError::Config(_))
        ));
    }

    #[test]
    fn documented_example_parses() {
        let text = r#"
            n = 130
            s = 65
            d = 2
            m = 48
            mod_order = 2
            cp_len = 8
            l_ch = 4
            codebook_seed = 1
            [[users]]
            k = 1
            l = 2
            [[users]]
            k = 1
            l = 1
            [baseline]
            k = 2
            mod_order = 2
        "#;
        let cfg = HsvcConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.baseline_params(), BaselineParams { k: 2, mod_order: 2 });
        assert_eq!(cfg.capacity().unwrap().total(), 15);
    }
}
