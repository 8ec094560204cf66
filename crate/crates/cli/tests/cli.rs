use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_trichotomy-lab");

fn lab(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("TRICHOTOMY_LAB_THREADS", t),
        None => cmd.env_remove("TRICHOTOMY_LAB_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

struct Dir(TempDir);

impl Dir {
    fn new() -> Self {
        Dir(tempfile::tempdir().unwrap())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    fn generate(&self, name: &str, extra: &[&str]) -> String {
        let out_path = self.arg(name);
        let mut args = vec!["generate", "--out", &out_path];
        args.extend_from_slice(extra);
        let out = lab(&args, None);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        out_path
    }

    fn edit(&self, from: &str, to: &str, f: impl FnOnce(&mut Value)) -> String {
        let mut doc: Value = serde_json::from_slice(&std::fs::read(from).unwrap()).unwrap();
        f(&mut doc);
        std::fs::write(self.path(to), serde_json::to_vec(&doc).unwrap()).unwrap();
        self.arg(to)
    }
}

fn read(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

#[test]
fn e1_validates_and_verifies() {
    let d = Dir::new();
    let e1 = d.generate("e1.json", &["--preset", "e1"]);
    let out = lab(&["validate", &e1], None);
    assert_eq!(code(&out), 0);
    assert_eq!(report(&out)["result"]["failing"], Value::Array(vec![]));
    let out = lab(&["verify", &e1, "--window", "10"], None);
    assert_eq!(code(&out), 0);
    let r = report(&out);
    let bounds = r["result"]["bounds"].as_array().unwrap();
    assert_eq!(bounds.len(), 4);
    for b in bounds {
        let k = f(&b["k_min"]);
        assert!((1.0..=1.0 + 1e-9).contains(&k), "{b}");
    }
    assert_eq!(r["window"], 10);
    assert_eq!(r["inputs"][0]["role"], "system");
    assert_eq!(r["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert!(r["tolerances"]["verdict"].is_number());
}

#[test]
fn missing_projections_is_an_input_error() {
    let d = Dir::new();
    let e1 = d.generate("e1.json", &["--preset", "e1"]);
    let bare = d.edit(&e1, "bare.json", |v| {
        v.as_object_mut().unwrap().remove("projections");
    });
    for cmd in ["validate", "verify", "roundtrip"] {
        let out = lab(&[cmd, &bare], None);
        assert_eq!(code(&out), 2);
        assert!(String::from_utf8_lossy(&out.stderr).contains("projections required"));
    }
}

#[test]
fn corrupted_annihilation_names_the_clause() {
    let d = Dir::new();
    let bad = d.generate("bad.json", &["--preset", "e1", "--corrupt", "break-annihilation"]);
    let out = lab(&["validate", &bad], None);
    assert_eq!(code(&out), 1);
    let failing = report(&out)["result"]["failing"].clone();
    assert!(failing.as_array().unwrap().iter().any(|c| c == "annihilation"), "{failing}");
}

#[test]
fn undersized_constant_fails_verification() {
    let d = Dir::new();
    let e1 = d.generate("e1.json", &["--preset", "e1"]);
    let k = d.edit(&e1, "k.json", |v| v["params"]["K"] = 0.5.into());
    let out = lab(&["verify", &k], None);
    assert_eq!(code(&out), 1);
    assert!((f(&report(&out)["result"]["max_k_min"]) - 1.0).abs() <= 1e-12);
}

#[test]
fn uniform_check_of_nonuniform_fixture_fails() {
    let d = Dir::new();
    let e2 = d.generate("e2.json", &["--preset", "e2-embedded", "--horizon", "40"]);
    assert_eq!(code(&lab(&["verify", &e2], None)), 0);
    let uniform = d.edit(&e2, "u.json", |v| v["params"]["eps"] = 0.0.into());
    let out = lab(&["verify", &uniform], None);
    assert_eq!(code(&out), 1);
    let k = f(&report(&out)["result"]["max_k_min"]);
    assert!((k / 19.5f64.exp() - 1.0).abs() <= 1e-6, "{k}");
}

#[test]
fn coupled_documents_of_e1() {
    let d = Dir::new();
    let e1 = d.generate("e1.json", &["--preset", "e1"]);
    let (b, c) = (d.arg("b.json"), d.arg("c.json"));
    let out = lab(&["couple", &e1, "--out-b", &b, "--out-c", &c], None);
    assert_eq!(code(&out), 0);
    let doc_b = read(&d.path("b.json"));
    assert_eq!(doc_b["kind"], "fp-dichotomy");
    for step in doc_b["coeffs"].as_array().unwrap() {
        let diag: Vec<f64> = (0..3).map(|i| f(&step[i][i])).collect();
        assert_eq!(diag, vec![1.0, 4.0, 2.0]);
    }
    assert_eq!(doc_b["rates"]["h"]["kind"], "table");
    assert!(doc_b["rates"]["h"]["values"].as_array().unwrap().iter().all(|x| f(x) == 1.0));
    for path in [&b, &c] {
        assert_eq!(code(&lab(&["validate", path], None)), 0);
        assert_eq!(code(&lab(&["verify", path], None)), 0);
    }
}

#[test]
fn neutral_rescaling_leaves_the_system_unchanged() {
    let d = Dir::new();
    let e1 = d.generate("e1.json", &["--preset", "e1"]);
    let neutral = d.edit(&e1, "n.json", |v| {
        v["rates"]["h"] = serde_json::json!({"kind": "table", "values": vec![1.0; 11]});
        v["params"]["b"] = 0.0.into();
    });
    let b = d.arg("b.json");
    assert_eq!(code(&lab(&["couple", &neutral, "--out-b", &b], None)), 0);
    assert_eq!(read(&d.path("b.json"))["coeffs"], read(&d.path("n.json"))["coeffs"]);
}

#[test]
fn rotated_fixture_couples_with_unit_constants() {
    let d = Dir::new();
    let rot = d.generate("rot.json", &["--preset", "e1", "--seed", "7"]);
    let (b, c) = (d.arg("b.json"), d.arg("c.json"));
    assert_eq!(code(&lab(&["couple", &rot, "--out-b", &b, "--out-c", &c], None)), 0);
    for path in [&b, &c] {
        let out = lab(&["verify", path], None);
        assert_eq!(code(&out), 0);
        assert!((f(&report(&out)["result"]["max_k_min"]) - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn roundtrip_stages() {
    let d = Dir::new();
    let e1 = d.generate("e1.json", &["--preset", "e1"]);
    let out = lab(&["roundtrip", &e1], None);
    assert_eq!(code(&out), 0);
    let r = report(&out)["result"].clone();
    assert!(f(&r["family_error"]) <= 1e-14 && f(&r["system_error"]) <= 1e-14, "{r}");

    let (b, c) = (d.arg("b.json"), d.arg("c.json"));
    assert_eq!(code(&lab(&["couple", &e1, "--out-b", &b, "--out-c", &c], None)), 0);
    assert_eq!(code(&lab(&["roundtrip", &e1, "--b", &b, "--c", &c], None)), 0);
    let tampered = d.edit(&c, "c_bad.json", |v| {
        let x = f(&v["coeffs"][3][1][1]);
        v["coeffs"][3][1][1] = (x * 1.001).into();
    });
    let out = lab(&["roundtrip", &e1, "--c", &tampered], None);
    assert_eq!(code(&out), 1);
    assert_eq!(report(&out)["result"]["failed_stage"], "coupling-relation");
}

#[test]
fn two_way_fixture_round_trips_to_zero_central_part() {
    let d = Dir::new();
    let spec = d.path("spec.json");
    std::fs::write(
        &spec,
        r#"{"version": 1, "generate": {"horizon": 10,
            "blocks": [{"role": "stable", "dim": 1}, {"role": "unstable", "dim": 2}],
            "rates": {"h": {"kind": "exp", "lambda": 2.0}, "k": {"kind": "exp", "lambda": 2.0},
                      "mu": {"kind": "poly", "p": 1.0}, "nu": {"kind": "poly", "p": 1.0}},
            "a": 1.0, "b": 1.0, "rotation": 3}}"#,
    )
    .unwrap();
    let spec = spec.display().to_string();
    let out = lab(&["roundtrip", &spec], None);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    assert!(f(&report(&out)["result"]["family_error"]) <= 1e-12);
    let full = d.generate("full.json", &[&spec]);
    let p3: Vec<Vec<Vec<f64>>> = serde_json::from_value(read(Path::new(&full))["projections"]["P3"].clone()).unwrap();
    assert!(p3.iter().flatten().flatten().all(|&x| x == 0.0));
}

#[test]
fn estimate_examples() {
    let d = Dir::new();
    let e2 = d.generate("e2.json", &["--preset", "e2-embedded", "--horizon", "40"]);
    let out = lab(&["estimate", &e2, "--grid", r#"{"a": [0.75, 1], "eps": [0, 0.5]}"#], None);
    assert_eq!(code(&out), 0);
    let best = report(&out)["result"]["best"].clone();
    assert_eq!((f(&best["a"]), f(&best["eps"])), (0.75, 0.5));
    assert!((f(&best["K"]) - 1.0).abs() <= 1e-9);

    let grid = d.path("grid.json");
    std::fs::write(&grid, r#"{"a": [1.0], "b": [1.0], "eps": [0.0]}"#).unwrap();
    let out = lab(&["estimate", &e2, "--grid", &grid.display().to_string()], None);
    let r = report(&out);
    assert_eq!(r["result"]["report"]["points"].as_array().unwrap().len(), 1);
    assert_eq!(r["result"]["best"]["K"], r["result"]["report"]["points"][0]["k_min"]);
    assert_eq!(r["inputs"][1]["role"], "grid");

    assert_eq!(code(&lab(&["estimate", &e2, "--grid", r#"{"a": [0.0, 1.0]}"#], None)), 2);
}

#[test]
fn reports_are_byte_identical_across_thread_counts() {
    let d = Dir::new();
    let e1 = d.generate("e1.json", &["--preset", "e1", "--seed", "11"]);
    let runs: Vec<Vec<u8>> = [Some("1"), Some("4"), None, Some("4")]
        .iter()
        .map(|t| {
            let out = lab(&["roundtrip", &e1], *t);
            assert_eq!(code(&out), 0);
            out.stdout
        })
        .collect();
    assert!(runs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn malformed_inputs_exit_with_two() {
    let d = Dir::new();
    let e1 = d.generate("e1.json", &["--preset", "e1"]);
    let cases = [
        d.edit(&e1, "v.json", |v| v["version"] = 7.into()),
        d.edit(&e1, "both.json", |v| {
            v["generate"] = serde_json::to_value(trichotomy_core::genlab::e1_spec()).unwrap();
        }),
        d.edit(&e1, "ragged.json", |v| {
            v["coeffs"][2][1].as_array_mut().unwrap().pop();
        }),
        d.edit(&e1, "short.json", |v| {
            v["projections"]["P2"].as_array_mut().unwrap().pop();
        }),
        d.edit(&e1, "unknown.json", |v| v["extra"] = 1.into()),
        d.edit(&e1, "rate.json", |v| v["rates"]["h"] = serde_json::json!({"kind": "exp"})),
    ];
    for path in &cases {
        let out = lab(&["validate", path], None);
        assert_eq!(code(&out), 2, "{path}");
        assert_eq!(report(&out)["exit_code"], 2);
        assert!(!out.stderr.is_empty());
    }
    std::fs::write(d.path("broken.json"), "{\"version\": 1,\n \"dim\": 2,}").unwrap();
    let out = lab(&["validate", &d.arg("broken.json")], None);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    assert_eq!(code(&lab(&["verify", &e1, "--window", "11"], None)), 2);
    assert_eq!(code(&lab(&["verify", &e1], Some("zero"))), 2);
    assert_eq!(code(&lab(&["verify"], None)), 2);
}
