use tbg_core::config::{Preset, RunConfig, Study};

#[test]
fn shipped_configs_reproduce_their_presets() {
    for (text, preset) in [
        (include_str!("../../../configs/desk.cfg"), Preset::Desk),
        (include_str!("../../../configs/paper.cfg"), Preset::Paper),
    ] {
        let parsed = RunConfig::from_text(Preset::Desk, Study::Compare, text).unwrap();
        assert_eq!(parsed, RunConfig::preset(preset, Study::Compare));
    }
}
