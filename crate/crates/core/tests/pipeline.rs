use turnsat::ablation::ablate;
use turnsat::pipeline::{matrix, train_artifact, ModelArtifact, SplitParams};
use turnsat::synth::{generate_corpus, Defect};
use turnsat::{Corpus, FeatureSchema, FeatureSet, GeneratorConfig, Lexicon, ModelKind, ModelSpec, Scope};

fn corpus(seed: u64, tweak: impl FnOnce(&mut GeneratorConfig)) -> Corpus {
    let mut cfg = GeneratorConfig {
        n_dialogues: 500,
        new_skill_fraction: 0.02,
        seed,
        ..GeneratorConfig::default()
    };
    tweak(&mut cfg);
    generate_corpus(&cfg).unwrap().0
}

const SPLIT: SplitParams = SplitParams {
    test_fraction: 0.2,
    seed: 5,
};

#[test]
fn saved_artifact_predicts_bit_identically() {
    let c = corpus(1, |_| {});
    let dir = tempfile::tempdir().unwrap();
    for kind in ModelKind::ALL {
        let spec = ModelSpec::default_for(kind, 3);
        let (art, prepared) = train_artifact(&c, &spec, SPLIT, &Lexicon::default()).unwrap();
        let path = dir.path().join(format!("{kind}.json"));
        art.save(&path).unwrap();
        let back = ModelArtifact::load(&path).unwrap();
        assert_eq!(back, art, "{kind}");
        let (x, _) = matrix(&prepared.eval);
        let fp = prepared.schema.fingerprint();
        let a = art.model.predict(fp, &x).unwrap();
        let b = back.model.predict(fp, &x).unwrap();
        assert!(a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits()), "{kind}");
        assert_eq!(art.evaluate(&c, 100, 1).unwrap(), back.evaluate(&c, 100, 1).unwrap());
    }
}

#[test]
fn artifact_with_unknown_version_is_rejected() {
    let c = corpus(2, |_| {});
    let spec = ModelSpec::default_for(ModelKind::Lasso, 1);
    let (art, _) = train_artifact(&c, &spec, SPLIT, &Lexicon::default()).unwrap();
    let bumped = art.to_json().unwrap().replacen("\"version\":1", "\"version\":99", 1);
    assert!(ModelArtifact::from_json(&bumped).is_err());
}

#[test]
fn ablation_removes_exactly_the_tagged_columns() {
    let c = corpus(3, |_| {});
    let split = SPLIT.apply(&c).unwrap();
    let mut spec = ModelSpec::default_for(ModelKind::Gbrt, 1);
    spec.set("n_stages", "10").unwrap();
    let rep = ablate(&split, &spec, &FeatureSet::NEW, &Lexicon::default(), 50, 1).unwrap();
    assert!(rep.failures.is_empty());
    let full = FeatureSchema::full();
    for r in &rep.results {
        assert_eq!(r.columns_removed, full.count_in(r.feature_set), "{}", r.feature_set);
        for d in &r.scopes {
            assert!(d.r_diff.lower <= d.r_diff.point && d.r_diff.point <= d.r_diff.upper);
            assert_eq!(d.significant, d.r_diff.excludes_zero());
        }
    }
    assert!(ablate(&split, &spec, &[FeatureSet::SluConfidence], &Lexicon::default(), 10, 1).is_err());
}

#[test]
fn ablating_an_inert_set_changes_nothing() {
    let c = corpus(4, |cfg| {
        cfg.defect_rates.insert(Defect::Unactionable, 0.0);
    });
    let split = SPLIT.apply(&c).unwrap();
    let lex = Lexicon::default();
    let any_flagged = c
        .turns()
        .any(|(_, t)| turnsat::features::unactionable_feature(&t.system_text, &lex).unwrap() != 0.0);
    assert!(!any_flagged, "precondition: no un-actionable responses");
    let spec = ModelSpec::default_for(ModelKind::Gbrt, 1);
    let rep = ablate(&split, &spec, &[FeatureSet::Unactionable], &lex, 200, 1).unwrap();
    let d = rep.results[0].scope(Scope::AllTest).unwrap();
    assert_eq!(d.r_with, d.r_without);
    assert_eq!(d.r_diff.point, 0.0);
    assert!(!d.significant);
}
