use std::path::Path;
use std::process::{Command, Output};

use biascope::corpus::{write_corpus, Passage, Source};
use biascope::embed_store::{write_embeddings, EmbeddingMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn biascope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biascope"))
        .args(args)
        .output()
        .expect("spawn biascope")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn passage(id: &str, text: &str, source: Source) -> Passage {
    Passage {
        id: id.into(),
        text: text.into(),
        source,
        dataset: "toy".into(),
    }
}

/// `n` human/LLM pairs with embeddings from `emb(i, is_llm)`.
fn pair_dataset(dir: &Path, n: usize, dim: usize, mut emb: impl FnMut(usize, bool) -> Vec<f32>) {
    std::fs::create_dir_all(dir).unwrap();
    let mut passages = Vec::new();
    let mut rows = Vec::new();
    let mut tsv = String::from("human_id\tllm_id\n");
    for i in 0..n {
        let (h, l) = (format!("h{i}"), format!("l{i}"));
        passages.push(passage(&h, &format!("human text {i}"), Source::Human));
        passages.push(passage(&l, &format!("llm text {i}"), Source::Llm));
        rows.push((h.clone(), emb(i, false)));
        rows.push((l.clone(), emb(i, true)));
        tsv.push_str(&format!("{h}\t{l}\n"));
    }
    write_corpus(&passages, dir.join("corpus.jsonl")).unwrap();
    std::fs::write(dir.join("pairs.tsv"), tsv).unwrap();
    write_embeddings(&EmbeddingMatrix::from_rows(dim, rows).unwrap(), dir.join("embs.bin")).unwrap();
}

#[test]
fn missing_qrels_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nowhere/qrels.tsv");
    let out = biascope(&["eval", "--qrels", p(&missing), "--out-dir", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(p(&missing)), "{err}");
}

#[test]
fn malformed_qrels_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let qrels = tmp.path().join("qrels.tsv");
    std::fs::write(&qrels, "q1\t0\td1\n").unwrap();
    let corpus = tmp.path().join("corpus.jsonl");
    write_corpus(&[passage("d1", "x", Source::Human)], &corpus).unwrap();
    let out = biascope(&["eval", "--qrels", p(&qrels), "--corpus", p(&corpus), "--out-dir", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_config_field_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("job.json");
    std::fs::write(&cfg, r#"{"dataset": "x", "kay": 5}"#).unwrap();
    assert_eq!(biascope(&["eval", "--config", p(&cfg)]).status.code(), Some(2));
}

#[test]
fn eval_from_trec_run() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write_corpus(
        &[
            passage("a", "x", Source::Human),
            passage("b", "y", Source::Llm),
            passage("c", "z", Source::Llm),
        ],
        d.join("corpus.jsonl"),
    )
    .unwrap();
    std::fs::write(d.join("qrels.tsv"), "q1\t0\ta\t1\nq1\t0\tc\t2\n").unwrap();
    std::fs::write(d.join("run.trec"), "q1 Q0 b 1 3.0 t\nq1 Q0 a 2 2.0 t\nq1 Q0 c 3 1.0 t\n").unwrap();
    let out = biascope(&[
        "eval",
        "--corpus", p(&d.join("corpus.jsonl")),
        "--qrels", p(&d.join("qrels.tsv")),
        "--runs", p(&d.join("run.trec")),
        "--out-dir", p(&d.join("out")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["prefs.csv", "ndcg.csv", "summary.json"] {
        assert!(d.join("out").join(f).exists(), "{f}");
    }
    let s = json(&d.join("out/summary.json"));
    // ranks b(L) a(H) c(L): weights 1, 1/log2(3), 1/2
    let w2 = 1.0 / 3f64.log2();
    let want = (w2 - 1.5) / (1.5 + w2);
    assert!((s["mean_delta_ndsr"].as_f64().unwrap() - want).abs() < 1e-12);
}

#[test]
fn geometry_identical_pairs_are_consistent() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("same");
    pair_dataset(&d, 30, 16, |i, llm| {
        let mut v = vec![i as f32; 16];
        if llm {
            v[3] += 2.0;
        }
        v
    });
    let out = biascope(&[
        "geometry",
        "--dataset", "same",
        "--corpus", p(&d.join("corpus.jsonl")),
        "--pairs", p(&d.join("pairs.tsv")),
        "--doc-embs", p(&d.join("embs.bin")),
        "--out-dir", p(&d.join("out")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let c = &json(&d.join("out/consistency.json"))[0];
    assert!((c["mean_pairwise_cos"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(c["significant"], Value::Bool(true));
}

#[test]
fn geometry_random_embeddings_not_significant_and_cross_matrix() {
    let tmp = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    pair_dataset(&a, 100, 768, |_, _| (0..768).map(|_| rng.random_range(-1.0f32..1.0)).collect());
    pair_dataset(&b, 100, 768, |_, _| (0..768).map(|_| rng.random_range(-1.0f32..1.0)).collect());
    let cfg = tmp.path().join("job.json");
    let job = serde_json::json!({
        "dataset": "a",
        "corpus": a.join("corpus.jsonl"),
        "pairs": a.join("pairs.tsv"),
        "doc_embs": a.join("embs.bin"),
        "out_dir": tmp.path().join("out"),
        "seed": 4,
        "extra_datasets": [{
            "dataset": "b",
            "corpus": b.join("corpus.jsonl"),
            "pairs": b.join("pairs.tsv"),
            "doc_embs": b.join("embs.bin"),
        }],
    });
    std::fs::write(&cfg, job.to_string()).unwrap();
    let out = biascope(&["geometry", "--config", p(&cfg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let c = json(&tmp.path().join("out/consistency.json"));
    assert_eq!(c.as_array().unwrap().len(), 2);
    assert_eq!(c[0]["significant"], Value::Bool(false));
    let x = json(&tmp.path().join("out/cross_alignment.json"));
    let m = x["matrix"].as_array().unwrap();
    assert_eq!(m.len(), 2);
    assert!((m[0][0].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(x["pairs"][0]["significant"], Value::Bool(false));
}

#[test]
fn lab_all_regimes_monotone() {
    let tmp = tempfile::tempdir().unwrap();
    let out_path = tmp.path().join("lab_report.json");
    let out = biascope(&["lab", "run", "--regime", "all", "--delta-a", "1.0", "--seeds", "5", "--out", p(&out_path)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&out_path);
    assert_eq!(r["ordering"]["monotone"], Value::Bool(true));
    let first = &r["reports"][0]["seeds"][0];
    assert!(first["trace"].as_array().unwrap().len() > 2);
    assert!(first["alignment"]["cos"].is_number());
}

#[test]
fn lab_rejects_unknown_regime() {
    let out = biascope(&["lab", "run", "--regime", "sideways", "--out", "/dev/null"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn linguistics_histogram_matches_hand_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    // N = 4. df: a=4, b=2, c=1, so idf a=ln(4/5), b=ln(4/3), c=ln 2.
    write_corpus(
        &[
            passage("h1", "a b", Source::Human),
            passage("h2", "a c", Source::Human),
            passage("l1", "a b", Source::Llm),
            passage("l2", "a", Source::Llm),
        ],
        d.join("corpus.jsonl"),
    )
    .unwrap();
    std::fs::write(
        d.join("ppl.jsonl"),
        "{\"doc_id\":\"h1\",\"ppl\":20}\n{\"doc_id\":\"h2\",\"ppl\":30}\n{\"doc_id\":\"l1\",\"ppl\":5}\n{\"doc_id\":\"l2\",\"logprobs\":[-2.0,-2.0]}\n",
    )
    .unwrap();
    let out = biascope(&[
        "linguistics",
        "--corpus", p(&d.join("corpus.jsonl")),
        "--ppl", p(&d.join("ppl.jsonl")),
        "--bins", "2",
        "--out-dir", p(&d.join("out")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // medians: h1 (ln.8+ln4/3)/2 = 0.0323, h2 (ln.8+ln2)/2 = 0.2350,
    // l1 0.0323, l2 ln .8 = -0.2231; range split at 0.0059
    let hist = std::fs::read_to_string(d.join("out/idf_hist.csv")).unwrap();
    let counts: Vec<(usize, usize)> = hist
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect();
    assert_eq!(counts, vec![(0, 1), (2, 1)]);
    let effects = std::fs::read_to_string(d.join("out/effect_sizes.csv")).unwrap();
    assert!(effects.starts_with("comparison,g_ppl,g_idf,p_ppl,p_idf\n"));
    let row: Vec<&str> = effects.lines().nth(1).unwrap().split(',').collect();
    assert!(row[1].parse::<f64>().unwrap() > 0.0, "human PPL higher here");
}

#[test]
fn ingest_collect_reorders_responses() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write_corpus(
        &[passage("x", "first", Source::Human), passage("y", "second", Source::Llm)],
        d.join("corpus.jsonl"),
    )
    .unwrap();
    let req = d.join("req.jsonl");
    assert!(biascope(&["ingest", "requests", "--corpus", p(&d.join("corpus.jsonl")), "--out", p(&req)]).status.success());
    std::fs::write(d.join("resp.jsonl"), "{\"id\":\"y\",\"vector\":[3,4]}\n{\"id\":\"x\",\"vector\":[1,2]}\n").unwrap();
    let bin = d.join("embs.bin");
    let out = biascope(&["ingest", "collect", "--responses", p(&d.join("resp.jsonl")), "--requests", p(&req), "--out", p(&bin)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = biascope::embed_store::read_embeddings(&bin).unwrap();
    assert_eq!(m.ids(), ["x", "y"]);
    assert_eq!(m.row(1), [3.0, 4.0]);
}

#[test]
fn debias_from_saved_direction() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("ds");
    pair_dataset(&d, 20, 8, |i, llm| {
        let mut v: Vec<f32> = (0..8).map(|j| ((i * 7 + j * 3) % 5) as f32).collect();
        if llm {
            v[0] += 1.0;
        }
        v
    });
    let (corpus, pairs, embs) = (d.join("corpus.jsonl"), d.join("pairs.tsv"), d.join("embs.bin"));
    let first = d.join("first");
    let out = biascope(&[
        "debias",
        "--corpus", p(&corpus),
        "--pairs", p(&pairs),
        "--embs", p(&embs),
        "--out-dir", p(&first),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let second = d.join("second");
    let out = biascope(&[
        "debias",
        "--embs", p(&d.join("embs.bin")),
        "--direction", p(&first.join("direction.bin")),
        "--out-dir", p(&second),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = std::fs::read(first.join("doc_embs_debiased.bin")).unwrap();
    let b = std::fs::read(second.join("doc_embs_debiased.bin")).unwrap();
    assert_eq!(a, b);
    let m = biascope::embed_store::read_embeddings(second.join("doc_embs_debiased.bin")).unwrap();
    // the only displacement is along axis 0, so that coordinate is gone
    assert!(m.as_slice().chunks(8).all(|r| r[0].abs() < 1e-6));
}
