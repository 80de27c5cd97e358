use dink_core::pipeline::{Preset, TrainConfig};

#[test]
fn presets_match_the_reference_table() {
    let table: toml::Table = include_str!("data/presets.toml").parse().unwrap();
    assert_eq!(table.len(), Preset::ALL.len());
    for preset in Preset::ALL {
        let row = table[preset.name()].as_table().unwrap();
        let expected = TrainConfig::default()
            .overlay_toml_str(&toml::to_string(row).unwrap())
            .unwrap();
        let actual = preset.config();
        assert_eq!(actual, expected, "{}", preset.name());
        // Full-graph training for all three.
        assert_eq!(actual.batch_size, None);
    }
}
