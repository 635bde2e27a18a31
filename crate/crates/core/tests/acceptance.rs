//! Acceptance gate. Runs every criterion in sequence (timings are
//! meaningful only without parallel tests competing for the CPU) and
//! prints one PASS/FAIL line each.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use evmfuse::autodiff::{grad_check, AdError, Array2D, ParamId, ParamStore, Tape, Var};
use evmfuse::cfg::{
    build_cfg, export_coo, export_dot, parse_dot, BasicBlock, BlockKind, Cfg, SAMPLE_CONTRACT_ASM,
};
use evmfuse::encoders::{
    encode_graph, encode_opcode, encode_source, node_features, slstm_recurrence, EncoderConfig,
    GraphParams, OpcodeParams, SourceParams,
};
use evmfuse::evm::{assemble, assemble_text, disassemble, execute, Opcode};
use evmfuse::fusion::{cross_attend, fuse, FusionConfig, FusionMode, FusionParams};
use evmfuse::harness::{
    evaluate, gen_synthetic, hamming_score, hs_degradation, robustness_eval, train, Config,
    Modality, Model, Transforms,
};
use evmfuse::obfuscate::{
    obfuscate_bytecode, random_calldata, BytecodePass, DEFAULT_JUNK_DENSITY, VERIFY_STEP_LIMIT,
};
use evmfuse::preprocess::{
    chunk_tokens, hash_tokenize, normalize_mnemonic, normalize_opcodes, OpcodeVocab,
};

const GRAD_EPS: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-4;

/// Criteria that do not hold at desk scale. They are still run and
/// reported, but do not fail the suite.
const KNOWN_RED: &[&str] = &[];

/// (passed, worst relative error, coordinates checked)
type CheckOutcome = Result<(bool, f64, usize), AdError>;

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

// ---------------------------------------------------------------------------

fn round_trip() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 2000;
    let mut failures = 0;
    for k in 0..n {
        let len = if k < 50 { k } else { rng.gen_range(0..=256) };
        let mut bytes = vec![0u8; len];
        rng.fill(bytes.as_mut_slice());
        if assemble(&disassemble(&bytes)).ok().as_deref() != Some(&bytes[..]) {
            failures += 1;
        }
    }
    let took = start.elapsed();
    verdict(
        failures == 0 && took < Duration::from_secs(5),
        format!(
            "{n} random byte strings, {failures} failures, {}",
            secs(took)
        ),
    )
}

fn normalization() -> Verdict {
    let mut table: Vec<(String, &str)> = Vec::new();
    table.extend((1..=32).map(|k| (format!("PUSH{k}"), "PUSH")));
    table.extend((1..=16).map(|k| (format!("SWAP{k}"), "SWAP")));
    table.extend((1..=16).map(|k| (format!("DUP{k}"), "DUP")));
    table.extend((1..=4).map(|k| (format!("LOG{k}"), "LOG")));

    let mut failures = Vec::new();
    for (m, want) in &table {
        if normalize_mnemonic(m) != *want {
            failures.push(m.clone());
        }
        // Through the full decode path as well, with a real immediate.
        let op = Opcode::from_mnemonic(m).expect("known mnemonic");
        let imm = " 0x".to_string() + &"ab".repeat(op.immediate_len());
        let asm = if op.immediate_len() > 0 {
            format!("{m}{imm}")
        } else {
            m.clone()
        };
        let program = disassemble(&assemble_text(&asm).expect("valid asm"));
        if normalize_opcodes(&program).mnemonics != [*want] {
            failures.push(format!("{m} (decoded)"));
        }
    }
    let push40 = normalize_opcodes(&disassemble(&assemble_text("PUSH1 0x40").unwrap())).text();
    if push40 != "PUSH" {
        failures.push(format!("PUSH1 0x40 -> {push40}"));
    }
    verdict(
        table.len() == 68 && failures.is_empty(),
        format!(
            "{} suffixed opcodes plus PUSH1 0x40, {} failures {:?}",
            table.len(),
            failures.len(),
            failures
        ),
    )
}

fn random_cfg(rng: &mut ChaCha8Rng) -> Cfg {
    const WORDS: [&str; 8] = [
        "PUSH", "DUP", "SWAP", "MSTORE", "JUMPI", "JUMPDEST", "ADD", "STOP",
    ];
    let n = rng.gen_range(0..12);
    let mut blocks = Vec::new();
    let mut offset = 0;
    for id in 0..n {
        let len = rng.gen_range(1..6);
        let text: Vec<&str> = (0..len)
            .map(|_| WORDS[rng.gen_range(0..WORDS.len())])
            .collect();
        let size = rng.gen_range(1..20);
        blocks.push(BasicBlock {
            id,
            start_offset: offset,
            end_offset: offset + size,
            opcode_text: text.join(" "),
            kind: BlockKind::Normal,
        });
        offset += size;
    }
    blocks.push(BasicBlock {
        id: n,
        start_offset: offset,
        end_offset: offset,
        opcode_text: String::new(),
        kind: BlockKind::Exit,
    });
    let mut edges: Vec<(usize, usize)> = (0..rng.gen_range(0..3 * n + 1))
        .map(|_| (rng.gen_range(0..n.max(1)), rng.gen_range(0..=n)))
        .filter(|&(s, _)| s < n)
        .collect();
    edges.sort_unstable();
    edges.dedup();
    Cfg { blocks, edges }
}

fn cfg_fixture() -> Verdict {
    let cfg = build_cfg(&disassemble(&assemble_text(SAMPLE_CONTRACT_ASM).unwrap()));
    let b0 = &cfg.blocks[0];
    let exit = cfg.exit_id();
    let coo = export_coo(&cfg);
    let from0: Vec<(usize, usize)> = coo.rows[0]
        .iter()
        .zip(&coo.rows[1])
        .filter(|(s, _)| **s == 0)
        .map(|(&s, &d)| (s, d))
        .collect();
    let dot = export_dot(&cfg);
    let fixture_ok = b0.opcode_text == "PUSH PUSH MSTORE PUSH DUP REVERT"
        && exit == 9
        && from0 == [(0, 9)]
        && dot.contains("0 -> 9;")
        && dot.contains("EXIT_BLOCK");

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut round_trip_failures = 0;
    for _ in 0..100 {
        let g = random_cfg(&mut rng);
        if parse_dot(&export_dot(&g)).ok().as_ref() != Some(&g) {
            round_trip_failures += 1;
        }
    }
    verdict(
        fixture_ok && round_trip_failures == 0,
        format!(
            "block 0 \"{}\", edges from block 0 {:?}, exit id {exit}; DOT round trip on 100 random graphs, {round_trip_failures} failures",
            b0.opcode_text, from0
        ),
    )
}

fn obfuscation_soundness() -> Verdict {
    let start = Instant::now();
    let corpus = gen_synthetic(50, 3, 5);
    let mut sets: Vec<Vec<BytecodePass>> = BytecodePass::ALL.iter().map(|&p| vec![p]).collect();
    sets.push(BytecodePass::ALL.to_vec());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut runs, mut divergences, mut refused) = (0, 0, 0);
    for (i, s) in corpus.iter().enumerate() {
        let original = disassemble(&s.bytecode().unwrap());
        let inputs: Vec<Vec<u8>> = (0..10).map(|_| random_calldata(&mut rng)).collect();
        for passes in &sets {
            let Ok(obf) =
                obfuscate_bytecode(&original, passes, 1000 + i as u64, DEFAULT_JUNK_DENSITY)
            else {
                refused += 1;
                continue;
            };
            let obf = disassemble(&assemble(&obf).unwrap());
            for cd in &inputs {
                runs += 1;
                let a = execute(&original, cd, VERIFY_STEP_LIMIT);
                let b = execute(&obf, cd, VERIFY_STEP_LIMIT);
                if a.outcome() != b.outcome() {
                    divergences += 1;
                }
            }
        }
    }
    let took = start.elapsed();
    verdict(
        divergences == 0 && refused == 0 && runs == 50 * 10 * 5 && took < Duration::from_secs(60),
        format!("{runs} executions over 50 programs x 5 transform sets, {divergences} divergences, {refused} refused, {}", secs(took)),
    )
}

// ---------------------------------------------------------------------------

/// Weighted sum with fixed random weights, so that every output entry
/// carries a distinct gradient.
fn probe(t: &mut Tape, v: Var, seed: u64) -> Result<Var, AdError> {
    let (r, c) = t.shape(v);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = t.constant(Array2D::uniform(r, c, 1.0, &mut rng));
    let m = t.mul(v, w)?;
    Ok(t.sum(m))
}

type OpCase = (
    &'static str,
    Box<dyn Fn(&mut Tape, &[ParamId]) -> Result<Var, AdError>>,
);

fn op_cases() -> Vec<OpCase> {
    // p[0], p[2]: 3x4 general; p[1]: 4x3; p[3]: 3x4 positive; p[4]: 1x4;
    // p[5]: 1x1; p[6]: 5x1; p[7]: 6x16 (recurrence pre-activations);
    // p[8]: 4x16 (recurrent weights).
    fn v(t: &mut Tape, p: &[ParamId], k: usize) -> Var {
        t.param(p[k])
    }
    vec![
        (
            "matmul",
            Box::new(|t, p| {
                let (a, b) = (v(t, p, 0), v(t, p, 1));
                t.matmul(a, b)
            }),
        ),
        (
            "add",
            Box::new(|t, p| {
                let (a, b) = (v(t, p, 0), v(t, p, 2));
                t.add(a, b)
            }),
        ),
        (
            "sub",
            Box::new(|t, p| {
                let (a, b) = (v(t, p, 0), v(t, p, 2));
                t.sub(a, b)
            }),
        ),
        (
            "mul",
            Box::new(|t, p| {
                let (a, b) = (v(t, p, 0), v(t, p, 2));
                t.mul(a, b)
            }),
        ),
        (
            "div",
            Box::new(|t, p| {
                let (a, b) = (v(t, p, 0), v(t, p, 3));
                t.div(a, b)
            }),
        ),
        (
            "add_bias_row",
            Box::new(|t, p| {
                let (a, b) = (v(t, p, 0), v(t, p, 4));
                t.add_bias_row(a, b)
            }),
        ),
        (
            "scale",
            Box::new(|t, p| {
                let a = v(t, p, 0);
                Ok(t.scale(a, -1.7))
            }),
        ),
        (
            "scale_by",
            Box::new(|t, p| {
                let (a, s) = (v(t, p, 0), v(t, p, 5));
                t.scale_by(a, s)
            }),
        ),
        (
            "add_scalar",
            Box::new(|t, p| {
                let a = v(t, p, 0);
                Ok(t.add_scalar(a, 0.3))
            }),
        ),
        (
            "transpose",
            Box::new(|t, p| {
                let a = v(t, p, 0);
                Ok(t.transpose(a))
            }),
        ),
        (
            "concat_cols",
            Box::new(|t, p| {
                let (a, b) = (v(t, p, 0), v(t, p, 2));
                t.concat_cols(&[a, b])
            }),
        ),
        (
            "concat_rows",
            Box::new(|t, p| {
                let (a, b) = (v(t, p, 0), v(t, p, 2));
                t.concat_rows(&[a, b])
            }),
        ),
        (
            "slice_cols",
            Box::new(|t, p| {
                let a = v(t, p, 0);
                t.slice_cols(a, 1, 3)
            }),
        ),
        (
            "slice_rows",
            Box::new(|t, p| {
                let a = v(t, p, 0);
                t.slice_rows(a, 1, 3)
            }),
        ),
        (
            "gather_rows",
            Box::new(|t, p| {
                let a = v(t, p, 0);
                t.gather_rows(a, &[2, 0, 2, 1])
            }),
        ),
        (
            "scatter_matrix",
            Box::new(|t, p| {
                let e = v(t, p, 6);
                t.scatter_matrix(e, 3, 3, &[(0, 0), (0, 2), (1, 1), (2, 0), (2, 2)], 0.5)
            }),
        ),
        (
            "masked_softmax",
            Box::new(|t, p| {
                let e = v(t, p, 6);
                let m = t.scatter_matrix(
                    e,
                    3,
                    3,
                    &[(0, 0), (0, 2), (1, 1), (2, 0), (2, 2)],
                    f64::NEG_INFINITY,
                )?;
                Ok(t.row_softmax(m))
            }),
        ),
        (
            "row_softmax",
            Box::new(|t, p| {
                let a = v(t, p, 0);
                Ok(t.row_softmax(a))
            }),
        ),
        (
            "relu",
            Box::new(|t, p| {
                let a = v(t, p, 0);
                Ok(t.relu(a))
            }),
        ),
        (
            "leaky_relu",
            Box::new(|t, p| {
                let a = v(t, p, 0);
                Ok(t.leaky_relu(a, 0.2))
            }),
        ),
        (
            "sigmoid",
            Box::new(|t, p| {
                let a = v(t, p, 0);
                Ok(t.sigmoid(a))
            }),
        ),
        (
            "exp",
            Box::new(|t, p| {
                let a = v(t, p, 0);
                Ok(t.exp(a))
            }),
        ),
        (
            "log",
            Box::new(|t, p| {
                let a = v(t, p, 3);
                Ok(t.log(a))
            }),
        ),
        (
            "tanh",
            Box::new(|t, p| {
                let a = v(t, p, 0);
                Ok(t.tanh(a))
            }),
        ),
        (
            "clamp",
            Box::new(|t, p| {
                let a = v(t, p, 0);
                Ok(t.clamp(a, -0.4, 0.4))
            }),
        ),
        (
            "row_mean",
            Box::new(|t, p| {
                let a = v(t, p, 0);
                Ok(t.row_mean(a))
            }),
        ),
        (
            "row_max",
            Box::new(|t, p| {
                let a = v(t, p, 0);
                Ok(t.row_max(a))
            }),
        ),
        (
            "col_mean",
            Box::new(|t, p| {
                let a = v(t, p, 0);
                Ok(t.col_mean(a))
            }),
        ),
        (
            "col_max",
            Box::new(|t, p| {
                let a = v(t, p, 0);
                Ok(t.col_max(a))
            }),
        ),
        (
            "sum",
            Box::new(|t, p| {
                let a = v(t, p, 0);
                Ok(t.sum(a))
            }),
        ),
        (
            "layer_norm",
            Box::new(|t, p| {
                let a = v(t, p, 0);
                Ok(t.layer_norm(a, 1e-5))
            }),
        ),
        (
            "slstm_recurrence",
            Box::new(|t, p| {
                let (x, r) = (v(t, p, 7), v(t, p, 8));
                Ok(slstm_recurrence(t, x, r))
            }),
        ),
    ]
}

fn op_store() -> (ParamStore, Vec<ParamId>) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut s = ParamStore::new();
    let ids = vec![
        s.add("a", Array2D::uniform(3, 4, 1.0, &mut rng)),
        s.add("b", Array2D::uniform(4, 3, 1.0, &mut rng)),
        s.add("c", Array2D::uniform(3, 4, 1.0, &mut rng)),
        s.add(
            "pos",
            Array2D::uniform(3, 4, 1.0, &mut rng).map(|x| x.abs() + 0.5),
        ),
        s.add("bias", Array2D::uniform(1, 4, 1.0, &mut rng)),
        s.add("s", Array2D::scalar(0.8)),
        s.add("e", Array2D::uniform(5, 1, 1.0, &mut rng)),
        s.add("pre", Array2D::uniform(6, 16, 1.0, &mut rng)),
        s.add("rec", Array2D::uniform(4, 16, 0.5, &mut rng)),
    ];
    (s, ids)
}

fn small_encoder_config() -> EncoderConfig {
    EncoderConfig {
        model_dim: 8,
        heads: 2,
        src_layers: 1,
        op_blocks: 1,
        gnn_layers: 2,
        s_max: 4,
        vocab: 64,
        window: 8,
        ff_dim: 16,
        op_vocab: OpcodeVocab::new().size(),
    }
}

fn small_model_config() -> Config {
    Config {
        model_dim: 8,
        heads: 2,
        src_layers: 1,
        op_blocks: 1,
        gnn_layers: 1,
        s_max: 4,
        hidden: 8,
        window: 8,
        stride: 4,
        vocab: 64,
        max_opcodes: 24,
        ..Config::default()
    }
}

fn gradient_checks() -> Verdict {
    let start = Instant::now();
    let mut results: Vec<(String, CheckOutcome)> = Vec::new();

    let (mut store, ids) = op_store();
    for (k, (name, f)) in op_cases().into_iter().enumerate() {
        let ids = ids.clone();
        let r = grad_check(
            &mut store,
            |t| {
                let out = f(t, &ids)?;
                probe(t, out, 100 + k as u64)
            },
            GRAD_EPS,
            GRAD_TOL,
            12,
            k as u64,
        );
        results.push((
            name.to_string(),
            r.map(|r| (r.passed(), r.max_rel_err(), r.checked)),
        ));
    }

    let ec = small_encoder_config();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = build_cfg(&disassemble(&assemble_text(SAMPLE_CONTRACT_ASM).unwrap()));
    let sample = &gen_synthetic(1, 9, 5)[0];
    let text = "contract A { uint x ; function f ( uint a ) public { x = a + 1 ; } }";
    let chunks = chunk_tokens(&hash_tokenize(text, ec.vocab).unwrap(), ec.window, 4).unwrap();
    let vocab = OpcodeVocab::new();
    let op_ids: Vec<usize> = vocab
        .ids(
            normalize_opcodes(&disassemble(&sample.bytecode().unwrap()))
                .mnemonics
                .iter()
                .map(String::as_str),
        )
        .into_iter()
        .take(20)
        .collect();

    let mut s = ParamStore::new();
    let sp = SourceParams::new(&mut s, &ec, &mut rng);
    let r = grad_check(
        &mut s,
        |t| {
            let e = encode_source(t, &sp, &chunks).map_err(|_| AdError::NotScalar((0, 0)))?;
            probe(t, e, 7)
        },
        GRAD_EPS,
        GRAD_TOL,
        3,
        1,
    );
    results.push((
        "source encoder".into(),
        r.map(|r| (r.passed(), r.max_rel_err(), r.checked)),
    ));

    let mut s = ParamStore::new();
    let op = OpcodeParams::new(&mut s, &ec, &mut rng);
    let r = grad_check(
        &mut s,
        |t| {
            let e = encode_opcode(t, &op, &op_ids).map_err(|_| AdError::NotScalar((0, 0)))?;
            probe(t, e, 8)
        },
        GRAD_EPS,
        GRAD_TOL,
        4,
        2,
    );
    results.push((
        "opcode encoder".into(),
        r.map(|r| (r.passed(), r.max_rel_err(), r.checked)),
    ));

    let mut s = ParamStore::new();
    let gp = GraphParams::new(&mut s, &ec, &mut rng);
    let r = grad_check(
        &mut s,
        |t| {
            let feats =
                node_features(t, &cfg, &gp, &vocab).map_err(|_| AdError::NotScalar((0, 0)))?;
            let e = encode_graph(t, &cfg, feats, &gp).map_err(|_| AdError::NotScalar((0, 0)))?;
            probe(t, e, 9)
        },
        GRAD_EPS,
        GRAD_TOL,
        4,
        3,
    );
    results.push((
        "graph encoder".into(),
        r.map(|r| (r.passed(), r.max_rel_err(), r.checked)),
    ));

    let mut model = Model::new(&small_model_config()).unwrap();
    let feats = model.featurize_sample(sample).unwrap();
    let mut s = std::mem::take(&mut model.store);
    let r = grad_check(
        &mut s,
        |t| {
            model
                .loss(t, &feats, &sample.labels)
                .map_err(|_| AdError::NotScalar((0, 0)))
        },
        GRAD_EPS,
        GRAD_TOL,
        2,
        4,
    );
    results.push((
        "encoders->fusion->bce".into(),
        r.map(|r| (r.passed(), r.max_rel_err(), r.checked)),
    ));

    let took = start.elapsed();
    let failed: Vec<String> = results
        .iter()
        .filter(|(_, r)| !matches!(r, Ok((true, _, _))))
        .map(|(n, r)| format!("{n}: {r:?}"))
        .collect();
    let worst = results
        .iter()
        .filter_map(|(_, r)| r.as_ref().ok().map(|r| r.1))
        .fold(0.0, f64::max);
    let checked: usize = results
        .iter()
        .filter_map(|(_, r)| r.as_ref().ok().map(|r| r.2))
        .sum();
    verdict(
        failed.is_empty() && took < Duration::from_secs(120),
        format!(
            "{} checks ({} ops, 3 encoders, 1 composite), {checked} coordinates, worst rel err {worst:.2e}, {}{}",
            results.len(),
            results.len() - 4,
            secs(took),
            if failed.is_empty() { String::new() } else { format!(", failed {failed:?}") }
        ),
    )
}

// ---------------------------------------------------------------------------

fn fusion_setup(n: usize, seed: u64) -> (ParamStore, FusionParams, Vec<Array2D>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let cfg = FusionConfig {
        model_dim: 8,
        heads: 2,
        n_modalities: n,
        ..FusionConfig::default()
    };
    let p = FusionParams::new(&mut store, &cfg, &mut rng);
    *store.get_mut(p.w) = Array2D::uniform(1, n, 2.0, &mut rng);
    let mods = (0..n)
        .map(|i| Array2D::uniform(2 + i, 8, 1.0, &mut rng))
        .collect();
    (store, p, mods)
}

fn fused(store: &ParamStore, p: &FusionParams, mods: &[Array2D]) -> (Array2D, Array2D) {
    let mut t = Tape::new(store);
    let vars: Vec<Var> = mods.iter().map(|m| t.constant(m.clone())).collect();
    let out = fuse(&mut t, &vars, p, FusionMode::Full).unwrap();
    (t.value(out.f).clone(), t.value(out.alpha).clone())
}

fn fusion_algebra() -> Verdict {
    let (mut alpha_err, mut shift_err, mut perm_err, mut n2_err) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for seed in 0..20 {
        let (mut store, p, mods) = fusion_setup(3, seed);
        let (f, alpha) = fused(&store, &p, &mods);
        alpha_err = alpha_err.max((alpha.sum() - 1.0).abs());

        let shifted = store.get(p.w).map(|x| x + 3.7);
        let original_w = std::mem::replace(store.get_mut(p.w), shifted);
        shift_err = shift_err.max(fused(&store, &p, &mods).0.max_abs_diff(&f));
        *store.get_mut(p.w) = original_w;

        // Relabel modalities by a permutation, carrying each modality's own
        // parameters and fusion logit along with it.
        let perm = [2, 0, 1];
        let w = store.get(p.w).clone();
        let pw = store.add(
            "w_perm",
            Array2D::row_vector(perm.iter().map(|&i| w.data()[i]).collect()),
        );
        let q = FusionParams {
            self_attn: perm.iter().map(|&i| p.self_attn[i]).collect(),
            cross: p.cross,
            w: pw,
            proj_w: perm.iter().map(|&i| p.proj_w[i]).collect(),
            proj_b: perm.iter().map(|&i| p.proj_b[i]).collect(),
            heads: p.heads,
        };
        let pmods: Vec<Array2D> = perm.iter().map(|&i| mods[i].clone()).collect();
        let (fp, ap) = fused(&store, &q, &pmods);
        perm_err = perm_err.max(fp.max_abs_diff(&f));
        for (k, &i) in perm.iter().enumerate() {
            perm_err = perm_err.max((ap.data()[k] - alpha.data()[i]).abs());
        }

        let (store2, p2, mods2) = fusion_setup(2, 100 + seed);
        let mut t = Tape::new(&store2);
        let vars: Vec<Var> = mods2.iter().map(|m| t.constant(m.clone())).collect();
        let out = fuse(&mut t, &vars, &p2, FusionMode::Full).unwrap();
        let c12 = cross_attend(&mut t, out.z[0], out.z[1], &p2.cross, p2.heads).unwrap();
        let oracle = t.value(out.z[0]).zip_map(t.value(c12), |a, b| a + b);
        n2_err = n2_err.max(t.value(out.h[0]).max_abs_diff(&oracle));
    }
    verdict(
        alpha_err <= 1e-12 && shift_err <= 1e-12 && n2_err == 0.0 && perm_err <= 1e-12,
        format!(
            "20 draws: |sum(alpha)-1| {alpha_err:.1e}, shift {shift_err:.1e}, N=2 reduction {n2_err:.1e}, permutation {perm_err:.1e}"
        ),
    )
}

fn metrics_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let (n, l) = (rng.gen_range(1..20), rng.gen_range(1..8));
        let mut draw = || -> Vec<Vec<bool>> {
            (0..n)
                .map(|_| (0..l).map(|_| rng.gen()).collect())
                .collect()
        };
        let (y, p) = (draw(), draw());
        let mut hits = 0;
        for i in 0..n {
            for j in 0..l {
                if y[i][j] == p[i][j] {
                    hits += 1;
                }
            }
        }
        if hamming_score(&y, &p).unwrap() != hits as f64 / (n * l) as f64 {
            mismatches += 1;
        }
    }
    let d = hs_degradation(0.8916, 0.8794);
    verdict(
        mismatches == 0 && (d - 0.0122).abs() <= 1e-12,
        format!(
            "1000 random pairs, {mismatches} mismatches; hs_degradation(0.8916, 0.8794) = {d:.4}"
        ),
    )
}

// ---------------------------------------------------------------------------

fn learnability() -> Verdict {
    let start = Instant::now();
    let config = Config::default();
    let train_set = gen_synthetic(500, 1, 5);
    let test_set = gen_synthetic(100, 2, 5);
    let out = train(&config, &train_set).unwrap();
    let report = evaluate(&out.model, &test_set).unwrap();
    let took = start.elapsed();
    let train_hs = evaluate(&out.model, &train_set).unwrap().hs;
    verdict(
        report.hs >= 0.90 && config.epochs <= 50 && took <= Duration::from_secs(600),
        format!(
            "500 train / 100 test, {} epochs, final train loss {:.4}, test HS {:.4} (train HS {train_hs:.4}), {}",
            config.epochs,
            out.log.last().unwrap().train_loss,
            report.hs,
            secs(took)
        ),
    )
}

fn directional_robustness() -> Verdict {
    let transforms = Transforms::all_bytecode();
    let mut holds = 0;
    let mut lines = Vec::new();
    for seed in 1..=3u64 {
        let train_set = gen_synthetic(500, 100 + seed, 5);
        let test_set = gen_synthetic(100, 200 + seed, 5);
        let mut deg = Vec::new();
        for modalities in [Modality::ALL.to_vec(), vec![Modality::Opcode]] {
            let config = Config {
                seed,
                modalities,
                ..Config::default()
            };
            let model = train(&config, &train_set).unwrap().model;
            let r = robustness_eval(&model, &test_set, &transforms, seed, 10).unwrap();
            deg.push((r.degradation, r.hs_base, r.retained));
        }
        let ok = deg[0].0 <= deg[1].0;
        holds += ok as usize;
        lines.push(format!(
            "seed {seed}: trimodal {:+.3} (base {:.3}), opcode-only {:+.3} (base {:.3}) {}",
            deg[0].0,
            deg[0].1,
            deg[1].0,
            deg[1].1,
            if ok { "holds" } else { "violated" }
        ));
    }
    verdict(holds >= 2, format!("{holds}/3 seeds; {}", lines.join("; ")))
}

#[test]
fn acceptance() {
    let criteria: Vec<Criterion> = vec![
        ("round-trip", round_trip),
        ("normalization", normalization),
        ("cfg", cfg_fixture),
        ("obfuscation soundness", obfuscation_soundness),
        ("gradient checks", gradient_checks),
        ("fusion algebra", fusion_algebra),
        ("metrics oracle", metrics_oracle),
        ("desk-scale learnability", learnability),
        ("directional robustness", directional_robustness),
    ];
    let mut unexpected = Vec::new();
    for (name, run) in criteria {
        let v = run();
        let known = KNOWN_RED.contains(&name);
        let tag = match (v.pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        // Straight to the handle: libtest would swallow println! on success.
        let _ = writeln!(std::io::stderr(), "{tag}  {name}: {}", v.detail);
        if !v.pass && !known {
            unexpected.push(name);
        }
    }
    assert!(unexpected.is_empty(), "failed criteria: {unexpected:?}");
}
