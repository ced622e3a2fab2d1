use palmcode::contourcode::Neighborhood;
use palmcode::gallery::{Entry, HashTable};
use palmcode::matcher::{self, Mode, Query};
use palmcode::pipeline::Pipeline;
use palmcode::synth;
use palmcode::PalmError;

fn small_gallery(pipeline: &Pipeline) -> (HashTable, Vec<(Entry, palmcode::roi::RoiSet)>) {
    let samples = synth::roi_corpus(3, 2, 2, 9).unwrap();
    let labels = samples[0].1.band_labels.clone();
    let mut table = HashTable::new(pipeline, 32, 32, labels).unwrap();
    for (e, s) in &samples {
        table.enroll(s, e.clone(), pipeline).unwrap();
    }
    (table, samples)
}

#[test]
fn save_load_preserves_scores() {
    let pipeline = Pipeline::default();
    let (table, samples) = small_gallery(&pipeline);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.pcg");
    table.save(&path).unwrap();
    // header plus 676 bytes per band per column, at least
    assert!(std::fs::metadata(&path).unwrap().len() >= 6 * 2 * 676);
    let loaded = HashTable::load(&path).unwrap();
    assert_eq!(loaded.manifest(), table.manifest());
    assert_eq!(loaded.entries(), table.entries());
    let q = Query::new(&pipeline.codes(&samples[3].1).unwrap(), loaded.manifest()).unwrap();
    for mode in [Mode::Stm, Mode::Atm] {
        let a = matcher::match_all(&q, &table, mode).unwrap();
        let b = matcher::match_all(&q, &loaded, mode).unwrap();
        assert_eq!(a.scores, b.scores);
        assert_eq!(a.translations, b.translations);
    }
}

#[test]
fn corrupt_and_mismatched_files_are_rejected() {
    let pipeline = Pipeline::default();
    let (table, _) = small_gallery(&pipeline);
    let bytes = table.to_bytes().unwrap();
    assert!(HashTable::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut bad_magic = bytes.clone();
    bad_magic[0] ^= 0xff;
    assert!(HashTable::from_bytes(&bad_magic).is_err());

    let other = Pipeline { blur: Neighborhood::Eight, ..Pipeline::default() };
    assert!(matches!(Pipeline::for_gallery(table.manifest(), None), Ok(p) if p == pipeline));
    assert_ne!(other.config_hash(32, 32), pipeline.config_hash(32, 32));
    let mut forged = table.manifest().clone();
    forged.config_hash = other.config_hash(32, 32);
    assert!(matches!(Pipeline::for_gallery(&forged, None), Err(PalmError::ParamMismatch(_))));
}
