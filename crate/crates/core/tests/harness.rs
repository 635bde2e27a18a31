use evmfuse::evm::{assemble_text, to_hex};
use evmfuse::harness::{
    evaluate, gen_synthetic, load_dataset, robustness_eval, save_dataset, train, Config,
    ContractSample, HarnessError, Model, Transforms,
};
use evmfuse::obfuscate::BytecodePass;

fn small_config() -> Config {
    Config {
        model_dim: 8,
        heads: 2,
        src_layers: 1,
        op_blocks: 1,
        gnn_layers: 1,
        s_max: 4,
        hidden: 8,
        window: 16,
        stride: 8,
        vocab: 256,
        epochs: 1,
        lr: 5e-3,
        ..Config::default()
    }
}

#[test]
fn one_epoch_smoke_writes_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_synthetic(10, 1, 5);
    let out = train(&small_config(), &data).unwrap();
    assert_eq!(out.log.len(), 1);
    let path = dir.path().join("model.ckpt");
    out.model.save(&path).unwrap();
    let loaded = Model::load(&path).unwrap();
    assert_eq!(loaded.config, out.model.config);
    assert_eq!(
        evaluate(&loaded, &data).unwrap(),
        evaluate(&out.model, &data).unwrap()
    );
}

#[test]
fn same_seed_same_loss() {
    let data = gen_synthetic(16, 2, 5);
    let cfg = Config {
        epochs: 2,
        ..small_config()
    };
    let a = train(&cfg, &data).unwrap();
    let b = train(&cfg, &data).unwrap();
    assert_eq!(
        a.log.last().unwrap().train_loss,
        b.log.last().unwrap().train_loss
    );
}

#[test]
fn loss_decreases_over_twenty_epochs() {
    let data = gen_synthetic(40, 3, 5);
    let out = train(
        &Config {
            epochs: 20,
            ..small_config()
        },
        &data,
    )
    .unwrap();
    let first = out.log.first().unwrap().train_loss;
    let last = out.log.last().unwrap().train_loss;
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn evaluation_is_pure_and_consistent() {
    let data = gen_synthetic(12, 4, 5);
    let model = Model::new(&small_config()).unwrap();
    let a = evaluate(&model, &data).unwrap();
    assert_eq!(a, evaluate(&model, &data).unwrap());
    assert_eq!(a.hamming_loss, 1.0 - a.hs);
    assert_eq!(a.n, 12);
}

#[test]
fn empty_sets_are_rejected() {
    let model = Model::new(&small_config()).unwrap();
    assert_eq!(evaluate(&model, &[]), Err(HarnessError::EmptyTestSet));
    assert!(matches!(
        train(&small_config(), &[]),
        Err(HarnessError::EmptyTrainSet)
    ));
}

#[test]
fn config_errors_name_the_key() {
    let err = train(
        &Config {
            heads: 3,
            ..small_config()
        },
        &gen_synthetic(4, 1, 5),
    )
    .unwrap_err();
    match err {
        HarnessError::Config(e) => assert_eq!(e.key, "heads"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn source_absent_samples_still_predict() {
    let mut data = gen_synthetic(6, 5, 5);
    for s in &mut data {
        s.source = None;
    }
    let out = train(&small_config(), &data).unwrap();
    assert!(out.log[0].train_loss.is_finite());
}

#[test]
fn checkpoint_mismatch_is_reported() {
    let model = Model::new(&small_config()).unwrap();
    let mut ck = model.checkpoint();
    for (k, v) in &mut ck.metadata {
        if k == "hidden" {
            *v = "12".into();
        }
    }
    assert!(matches!(
        Model::from_checkpoint(&ck),
        Err(HarnessError::CheckpointMismatch(_))
    ));
}

#[test]
fn dataset_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    let data = gen_synthetic(20, 6, 5);
    save_dataset(&path, &data).unwrap();
    assert_eq!(load_dataset(&path, 5).unwrap(), data);
}

#[test]
fn robustness_bookkeeping() {
    let mut data = gen_synthetic(8, 7, 5);
    let model = Model::new(&small_config()).unwrap();

    let none = robustness_eval(&model, &data, &Transforms::default(), 0, 5).unwrap();
    assert_eq!(none.degradation, 0.0);
    assert_eq!((none.retained, none.excluded), (8, 0));

    let junk = Transforms {
        bytecode: vec![BytecodePass::Junk],
        ..Transforms::default()
    };
    let r = robustness_eval(&model, &data, &junk, 1, 5).unwrap();
    assert!(r.degradation.is_finite());
    assert_eq!(r.degradation, r.hs_base - r.hs_obf);

    // A computed jump cannot be relocated, so the sample is excluded.
    data.push(ContractSample {
        id: "computed".into(),
        source: None,
        bytecode_hex: to_hex(&assemble_text("PUSH1 0 CALLDATALOAD JUMP").unwrap()),
        labels: vec![false; 5],
    });
    let r = robustness_eval(&model, &data, &Transforms::all_bytecode(), 2, 5).unwrap();
    assert_eq!((r.retained, r.excluded), (8, 1));
}
