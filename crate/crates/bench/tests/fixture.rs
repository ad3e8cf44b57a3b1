use rismec_bench::Fixture;
use rismec_core::ScenarioConfig;

#[test]
fn default_fixture_matches_config() {
    let f = Fixture::default();
    assert_eq!(f.chan.matrices.num_ues(), f.cfg.num_ues);
    assert_eq!(f.codebooks.ap_beams.len(), f.cfg.ap_codebook_size);
    assert_eq!(f.codebooks.ce_configs.len(), f.cfg.ce_codebook_size);
}

#[test]
fn fixture_is_seeded() {
    let cfg = ScenarioConfig {
        seed: 42,
        ..ScenarioConfig::baseline()
    };
    assert_eq!(Fixture::new(cfg.clone()).chan, Fixture::new(cfg).chan);
}
