use std::collections::HashSet;

use nvdesign_core::{ExperimentConfig, ExperimentKind};
use sha2::{Digest, Sha256};

/// First 128 bits of SHA-256 over the waveform-defining fields. The
/// repetition count is excluded: it changes the loop count, not the waveform.
pub fn cache_key(config: &ExperimentConfig) -> u128 {
    let mut h = Sha256::new();
    h.update([match config.kind {
        ExperimentKind::Rabi => 0u8,
        ExperimentKind::Ramsey => 1u8,
    }]);
    h.update(config.pulse_time_ns.to_bits().to_le_bytes());
    h.update(config.wait_time_ns.to_bits().to_le_bytes());
    h.update(config.drive_frequency_mhz.to_bits().to_le_bytes());
    let digest = h.finalize();
    let mut first = [0u8; 16];
    first.copy_from_slice(&digest[..16]);
    u128::from_le_bytes(first)
}

/// Set of waveforms already resident on the simulated AWG.
#[derive(Clone, Debug, Default)]
pub struct WaveformCache {
    resident: HashSet<u128>,
    pub hits: u64,
    pub misses: u64,
}

impl WaveformCache {
    /// Records the lookup and returns whether it hit; misses become resident.
    pub fn lookup(&mut self, config: &ExperimentConfig) -> bool {
        if self.resident.insert(cache_key(config)) {
            self.misses += 1;
            false
        } else {
            self.hits += 1;
            true
        }
    }

    pub fn len(&self) -> usize {
        self.resident.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resident.is_empty()
    }

    pub fn clear(&mut self) {
        *self = WaveformCache::default();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_configs_share_a_key() {
        let a = ExperimentConfig::rabi(22.0, 100);
        assert_eq!(cache_key(&a), cache_key(&a.with_repetitions(5000)));
    }

    #[test]
    fn timing_changes_the_key() {
        assert_ne!(cache_key(&ExperimentConfig::rabi(22.0, 1)), cache_key(&ExperimentConfig::rabi(24.0, 1)));
        assert_ne!(
            cache_key(&ExperimentConfig::ramsey(22.0, 40.0, 1)),
            cache_key(&ExperimentConfig::ramsey(22.0, 60.0, 1))
        );
        assert_ne!(cache_key(&ExperimentConfig::rabi(22.0, 1)), cache_key(&ExperimentConfig::ramsey(22.0, 0.0, 1)));
    }

    #[test]
    fn lookup_counts() {
        let mut cache = WaveformCache::default();
        let e = ExperimentConfig::rabi(10.0, 1);
        assert!(!cache.lookup(&e));
        assert!(cache.lookup(&e));
        assert_eq!((cache.hits, cache.misses, cache.len()), (1, 1, 1));
    }
}
