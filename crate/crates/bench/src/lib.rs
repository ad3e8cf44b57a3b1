//! Fixtures shared by the benchmarks.

use rismec_core::channel::{build_codebooks, draw_channels, ChannelRealization, Codebooks};
use rismec_core::scenario::{stream_rng, Geometry, Stream};
use rismec_core::ScenarioConfig;

/// Default scenario with one drawn channel realization.
pub struct Fixture {
    pub cfg: ScenarioConfig,
    pub codebooks: Codebooks,
    pub chan: ChannelRealization,
}

impl Fixture {
    pub fn new(cfg: ScenarioConfig) -> Self {
        let geo = Geometry::for_config(&mut stream_rng(cfg.seed, Stream::Positions), &cfg);
        let chan = draw_channels(&mut stream_rng(cfg.seed, Stream::Channels), &cfg, &geo, 0)
            .expect("default geometry is valid");
        Self {
            codebooks: build_codebooks(&cfg),
            cfg,
            chan,
        }
    }
}

impl Default for Fixture {
    fn default() -> Self {
        Self::new(ScenarioConfig::baseline())
    }
}
