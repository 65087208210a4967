#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use idiolens_bench::fixture::{write_fixture, FixturePaths};

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_idiolens"));
    c.env_remove("IDIOLENS_SEED").env_remove("RUST_LOG");
    c
}

pub fn run_bin(args: &[String], seed_env: Option<&str>) -> Output {
    let mut c = bin();
    c.args(args);
    if let Some(s) = seed_env {
        c.env("IDIOLENS_SEED", s);
    }
    c.output().expect("spawn idiolens")
}

pub fn fixture(dir: &Path) -> FixturePaths {
    write_fixture(dir, 48, 11).expect("fixture")
}

/// One invocation and the files it writes.
pub struct Step {
    pub name: &'static str,
    pub args: Vec<String>,
    pub outputs: Vec<PathBuf>,
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

/// Every subcommand over the fixture, in dependency order, writing under `out`.
pub fn pipeline(f: &FixturePaths, out: &Path, seed: u64) -> Vec<Step> {
    let o = |name: &str| out.join(name);
    let mut steps = Vec::new();
    let mut step = |name: &'static str, args: Vec<String>, outputs: Vec<PathBuf>| {
        let mut full = vec![name.to_string()];
        full.extend(args);
        full.extend(["--seed".to_string(), seed.to_string()]);
        steps.push(Step {
            name,
            args: full,
            outputs,
        });
    };
    let a = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>();

    step(
        "convert",
        a(&[
            "--magpie",
            &s(&f.magpie),
            "--keywords",
            &s(&f.keywords),
            "--nouns",
            &s(&f.nouns),
            "--out",
            &s(&o("converted.jsonl")),
        ]),
        vec![o("converted.jsonl")],
    );
    for lang in ["nl", "de", "it"] {
        let labels = o(&format!("labels_{lang}.jsonl"));
        step(
            "label",
            a(&[
                "--corpus",
                &s(&f.corpus),
                "--translations",
                &s(&f.translations[lang]),
                "--lexicon",
                &s(&f.lexicons[lang]),
                "--out",
                &s(&labels),
            ]),
            vec![labels],
        );
    }
    let labels = o("labels_nl.jsonl");
    step(
        "distribution",
        a(&[
            "--corpus",
            &s(&f.corpus),
            "--labels",
            &s(&labels),
            "--out",
            &s(&o("distribution.csv")),
        ]),
        vec![o("distribution.csv")],
    );
    step(
        "agreement",
        a(&[
            "--corpus",
            &s(&f.corpus),
            "--labels",
            &format!("nl={}", s(&labels)),
            "--labels",
            &format!("de={}", s(&o("labels_de.jsonl"))),
            "--labels",
            &format!("it={}", s(&o("labels_it.jsonl"))),
            "--genetic",
            &s(&f.genetic),
            "--out",
            &s(&o("agreement.csv")),
            "--summary",
            &s(&o("agreement.json")),
        ]),
        vec![o("agreement.csv"), o("agreement.json")],
    );
    step(
        "crosstab",
        a(&[
            "--corpus",
            &s(&f.corpus),
            "--lexicon",
            &s(&f.lexicons["nl"]),
            "--translations",
            &s(&f.translations["nl"]),
            "--reference",
            &s(&f.reference),
            "--out",
            &s(&o("crosstab.csv")),
        ]),
        vec![o("crosstab.csv")],
    );
    step(
        "lengths",
        a(&[
            "--corpus",
            &s(&f.corpus),
            "--labels",
            &s(&labels),
            "--out",
            &s(&o("lengths.csv")),
        ]),
        vec![o("lengths.csv")],
    );
    for (analysis, subset) in [
        ("pie2ctx", "all"),
        ("ctx2pie", "fig"),
        ("pie2noun", "fig-par-minus-lit-wfw"),
    ] {
        let out_file = o(&format!("attn_{analysis}.csv"));
        step(
            "attn",
            a(&[
                "--analysis",
                analysis,
                "--dump",
                &s(&f.dumps),
                "--labels",
                &s(&labels),
                "--subset",
                subset,
                "--language",
                "nl",
                "--out",
                &s(&out_file),
            ]),
            vec![out_file],
        );
    }
    step(
        "xattn",
        a(&[
            "--analysis",
            "xattn_noun",
            "--dump",
            &s(&f.dumps),
            "--alignments",
            &s(&f.alignments),
            "--filter",
            "identical",
            "--subset",
            "fig",
            "--language",
            "nl",
            "--out",
            &s(&o("xattn.csv")),
        ]),
        vec![o("xattn.csv")],
    );
    step(
        "cca-fit",
        a(&[
            "--dump",
            &s(&f.dumps),
            "--pool-size",
            "200",
            "--out",
            &s(&o("bank.actd")),
        ]),
        vec![o("bank.actd")],
    );
    step(
        "cca-fit",
        a(&[
            "--dump",
            &s(&f.dumps),
            "--masked",
            &s(&f.masked),
            "--pool-size",
            "200",
            "--out",
            &s(&o("mask_bank.actd")),
        ]),
        vec![o("mask_bank.actd")],
    );
    step(
        "cca-layers",
        a(&[
            "--dump",
            &s(&f.dumps),
            "--labels",
            &s(&labels),
            "--bank",
            &s(&o("bank.actd")),
            "--subset",
            "fig",
            "--class",
            "pie",
            "--min-tokens",
            "20",
            "--out",
            &s(&o("cca_layers.csv")),
        ]),
        vec![o("cca_layers.csv")],
    );
    step(
        "cca-mask",
        a(&[
            "--dump",
            &s(&f.dumps),
            "--masked",
            &s(&f.masked),
            "--bank",
            &s(&o("mask_bank.actd")),
            "--out",
            &s(&o("cca_mask.csv")),
        ]),
        vec![o("cca_mask.csv")],
    );
    step(
        "probe",
        a(&[
            "--dump",
            &s(&f.dumps),
            "--target",
            "gold",
            "--language",
            "nl",
            "--out",
            &s(&o("probe_gold.csv")),
        ]),
        vec![o("probe_gold.csv")],
    );
    step(
        "probe",
        a(&[
            "--dump",
            &s(&f.dumps),
            "--target",
            "frequency",
            "--frequency",
            &s(&f.frequency),
            "--mean-pooled",
            "--folds",
            "4",
            "--out",
            &s(&o("probe_freq.csv")),
        ]),
        vec![o("probe_freq.csv")],
    );
    step(
        "inlp-train",
        a(&[
            "--dump",
            &s(&f.dumps),
            "--labels",
            &s(&labels),
            "--layers",
            "0,3",
            "--iterations",
            "4",
            "--folds",
            "4",
            "--out",
            &s(&o("projectors.actd")),
            "--report",
            &s(&o("inlp_report.csv")),
            "--accuracies",
            &s(&o("inlp_acc.csv")),
        ]),
        vec![o("projectors.actd"), o("inlp_report.csv"), o("inlp_acc.csv")],
    );
    step(
        "inlp-eval",
        a(&[
            "--corpus",
            &s(&f.corpus),
            "--lexicon",
            &s(&f.lexicons["nl"]),
            "--translations",
            &s(&f.translations["nl"]),
            "--post",
            &s(&f.sweep.join("0-1-2").join("translations.jsonl")),
            "--dump",
            &s(&f.dumps),
            "--projected",
            &s(&f.projected),
            "--out",
            &s(&o("inlp_eval.json")),
            "--attn-out",
            &s(&o("inlp_attn.csv")),
        ]),
        vec![o("inlp_eval.json"), o("inlp_attn.csv")],
    );
    step(
        "inlp-sweep",
        a(&[
            "--corpus",
            &s(&f.corpus),
            "--lexicon",
            &s(&f.lexicons["nl"]),
            "--translations",
            &s(&f.translations["nl"]),
            "--sweep-dir",
            &s(&f.sweep),
            "--language",
            "nl",
            "--out",
            &s(&o("sweep.csv")),
        ]),
        vec![o("sweep.csv")],
    );
    step(
        "report",
        a(&[
            "--corpus",
            &s(&f.corpus),
            "--labels",
            &s(&labels),
            "--translations",
            &s(&f.translations["nl"]),
            "--alignments",
            &s(&f.alignments),
            "--dump",
            &s(&f.dumps),
            "--out",
            &s(&o("report.json")),
        ]),
        vec![o("report.json")],
    );
    steps
}

/// Runs the steps, panicking with stderr on the first failure.
pub fn run_pipeline(steps: &[Step], seed_env: Option<&str>) {
    for st in steps {
        let out = run_bin(&st.args, seed_env);
        assert!(
            out.status.success(),
            "{} failed ({:?}):\n{}",
            st.name,
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        );
    }
}
