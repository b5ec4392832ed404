//! Binary symmetric uplink channels and the noiseless feedback path.
//!
//! Randomness is counter-based: every draw is keyed by
//! `(trial seed, user, role, lane, round)` and derived through a splitmix64
//! mix chain. Schemes that consume different numbers of bits therefore see
//! identical uplink noise and bid realizations under the same seed, which is
//! what the paired tracking / no-tracking comparisons rely on.

/// What a random draw is for. Separates the noise streams so that, e.g.,
/// channel noise is independent of bid values by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Uplink,
    BidInit,
    DriftGate,
    DriftInnovation,
}

impl Role {
    fn code(self) -> u64 {
        match self {
            Role::Uplink => 1,
            Role::BidInit => 2,
            Role::DriftGate => 3,
            Role::DriftInnovation => 4,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic 64-bit draw for a fully specified stream position.
pub fn keyed_u64(trial_seed: u64, user: u64, role: Role, lane: u64, round: u64) -> u64 {
    let mut h = splitmix64(trial_seed);
    h = splitmix64(h ^ user);
    h = splitmix64(h ^ role.code());
    h = splitmix64(h ^ lane);
    splitmix64(h ^ round)
}

/// Uniform draw in `[0, 1)` for the given stream position.
pub fn keyed_unit(trial_seed: u64, user: u64, role: Role, lane: u64, round: u64) -> f64 {
    (keyed_u64(trial_seed, user, role, lane, round) >> 11) as f64 / (1u64 << 53) as f64
}

/// Uniform index in `0..n` for the given stream position.
pub fn keyed_index(trial_seed: u64, user: u64, role: Role, lane: u64, round: u64, n: usize) -> usize {
    let x = keyed_u64(trial_seed, user, role, lane, round);
    ((x as u128 * n as u128) >> 64) as usize
}

/// Derive the seed for one Monte-Carlo trial from the master seed.
pub fn trial_seed(master_seed: u64, trial: u64) -> u64 {
    splitmix64(splitmix64(master_seed) ^ trial.wrapping_mul(0xA076_1D64_78BD_642F))
}

/// One user's noisy uplink: a BSC with crossover probability `p`.
/// `lane` distinguishes the K parallel sub-channels of a Vickrey bidder.
#[derive(Debug, Clone, Copy)]
pub struct BscChannel {
    p: f64,
    trial_seed: u64,
    user: u64,
    lane: u64,
}

impl BscChannel {
    pub fn new(p: f64, trial_seed: u64, user: u64, lane: u64) -> Self {
        assert!((0.0..0.5).contains(&p), "crossover probability must be in [0, 0.5)");
        BscChannel { p, trial_seed, user, lane }
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Transmit one bit in the given round; flipped with probability `p`.
    pub fn transmit(&self, bit: u8, round: u64) -> u8 {
        debug_assert!(bit <= 1);
        let flip = keyed_unit(self.trial_seed, self.user, Role::Uplink, self.lane, round) < self.p;
        bit ^ u8::from(flip)
    }
}

/// The CA-to-user path is noiseless; all feedback traffic is routed through
/// this identity so the assumption lives in one place.
pub fn feedback(bits: &[u8]) -> Vec<u8> {
    bits.to_vec()
}
