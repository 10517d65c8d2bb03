use glyphmotion::fixture::fixture_font;
use glyphmotion::motion::{check_limits, compile, DeviceConfig};
use glyphmotion::preprocess::prepare_default;
use glyphmotion::sim::{execute, tracking_error};
use glyphmotion::PresentationCondition;

#[test]
fn every_fixture_glyph_compiles_and_tracks_under_every_condition() {
    let cfg = DeviceConfig::default();
    let font = fixture_font();
    for cond in PresentationCondition::ALL {
        let prepared = prepare_default(&font, cond).unwrap();
        for g in prepared.iter() {
            let prog = compile(g, &cfg).unwrap_or_else(|e| panic!("{} {}: {e}", g.letter, cond.label()));
            let report = check_limits(&prog, &cfg);
            assert!(report.is_clean(), "{} {}: {report}", g.letter, cond.label());
            let trace = execute(&prog, &cfg).unwrap();
            let err = tracking_error(g, &trace).unwrap();
            assert!(err.max <= 0.0071, "{} {}: {err:?}", g.letter, cond.label());
            assert_eq!(trace.pen_events(), g.pen_events());
        }
    }
}
