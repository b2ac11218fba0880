use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dgsm"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Parses a CSV report into a header and rows of string fields.
fn table(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

fn num(s: &str) -> f64 {
    s.parse().unwrap_or_else(|_| panic!("not a number: '{s}'"))
}

fn repo_config(name: &str) -> String {
    format!("{}/../../configs/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn gfunction_table_values() {
    let o = run(&["analyze", &repo_config("gfunction.cfg")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (h, rows) = table(&stdout(&o));
    assert_eq!(rows.len(), 8);
    let x1 = &rows[0];
    assert_eq!(x1[col(&h, "input")], "x1");
    let s_tot = num(&x1[col(&h, "S_tot")]);
    let ub1 = num(&x1[col(&h, "UB1")]);
    assert!((s_tot - 0.788).abs() < 0.02, "S_tot = {s_tot}");
    assert!((ub1 - 3.83).abs() < 0.05, "UB1 = {ub1}");
    // DGSM with LB* costs N(3d+1); totals with B cost N(d+2).
    let n = 16384u64;
    assert_eq!(num(&x1[col(&h, "model_evals")]) as u64, n * 25 + n * 10);
}

#[test]
fn eval_count_column_matches_formula() {
    let dir = tempfile::tempdir().unwrap();
    let base = "model.builtin = linear_sum\nmodel.params.b = 1, 2, 3\nsampler.n = 200\n";
    for (analyses, expected) in [("dgsm", 200 * 4), ("bounds", 200 * 10), ("sobol\nsobol.first_order = none", 200 * 4)] {
        let cfg = write_config(dir.path(), "c.cfg", &format!("{base}analyses = {analyses}\n"));
        let o = run(&["analyze", cfg.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        let (h, rows) = table(&stdout(&o));
        for r in &rows {
            assert_eq!(r[col(&h, "model_evals")], expected.to_string(), "{analyses}");
        }
    }
}

#[test]
fn header_is_fixed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.cfg", "model.builtin = linear_one_var\nmodel.params.c = 2\nsampler.n = 16\nanalyses = dgsm\n");
    let o = run(&["analyze", cfg.to_str().unwrap()]);
    let text = stdout(&o);
    let first = text.lines().next().unwrap();
    assert!(first.starts_with("input,distribution,S,S_se,S_tot,S_tot_se,LB1,LB1_se,LB2,m_star,LB_star,UB1,UB2,"));
    assert!(first.ends_with(",variance,N,model_evals,gradient_evals"));
    assert!(text.contains("\r\n"), "RFC 4180 line endings");
    let (h, rows) = table(&text);
    // Unrequested quantities are empty.
    assert_eq!(rows[0][col(&h, "S_tot")], "");
    assert!((num(&rows[0][col(&h, "nu")]) - 4.0).abs() < 1e-8);
}

#[test]
fn constant_model_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.cfg", "model.expression = 2.5\nmodel.dimension = 2\nsampler.n = 64\nanalyses = dgsm, bounds\n");
    let o = run(&["analyze", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("variance"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_2_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("model.builtin = gfunction\nmodel.params.a = 0, 1\nanalyses = dgsm\n", "sampler.n"),
        ("model.builtin = gfunction\nmodel.params.a = 0, 1\nsampler.n = 10\n", "analyses"),
        ("model.builtin = nope\nsampler.n = 10\nanalyses = dgsm\n", "model.builtin"),
        ("model.builtin = gfunction\nmodel.params.a = 0, -3\nsampler.n = 10\nanalyses = dgsm\n", "model.params.a"),
        ("model.builtin = gfunction\nmodel.params.a = 0\nsampler.n = 10\nanalyses = dgsm\nspace.x1 = weibull(0, 1)\n", "space.x1"),
        ("model.builtin = gfunction\nmodel.params.a = 0\nsampler.n = 10\nanalyses = dgsm\nsampler.speed = 3\n", "sampler.speed"),
        ("model.expression = x1 + x4\nmodel.dimension = 2\nsampler.n = 10\nanalyses = dgsm\n", "model.expression"),
        ("model.builtin = morris_reduced\nsampler.n = 1\nanalyses = dgsm\n", "sampler.n"),
    ];
    for (text, key) in cases {
        let cfg = write_config(dir.path(), "bad.cfg", text);
        let o = run(&["analyze", cfg.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{key}: {}", stderr(&o));
        assert!(stderr(&o).contains(&format!("`{key}`")), "{key}: {}", stderr(&o));
    }
    let o = bin().args(["analyze", "/nonexistent/x.cfg"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = bin().args(["poincare", "gumbel(0, -1)"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = bin()
        .args(["analyze", &repo_config("gfunction.cfg")])
        .env("SA_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`SA_THREADS`"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let text = "model.builtin = gfunction\nmodel.params.a = 0, 1, 9\nsampler.kind = pseudo\nsampler.seed = 5\nsampler.n = 2000\nanalyses = bounds, sobol, morris, crossed\n";
    let cfg = write_config(dir.path(), "c.cfg", text);
    let a = run(&["analyze", cfg.to_str().unwrap()]);
    let b = bin().args(["analyze", cfg.to_str().unwrap()]).env("SA_THREADS", "1").output().unwrap();
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c1 = run(&["convergence", cfg.to_str().unwrap(), "--n", "50,100"]);
    let c2 = run(&["convergence", cfg.to_str().unwrap(), "--n", "50,100"]);
    assert_eq!(c1.stdout, c2.stdout);
}

#[test]
fn convergence_morris_reduced() {
    let o = run(&["convergence", &repo_config("morris_reduced.cfg"), "--n", "20,50,100,200,500"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (h, rows) = table(&stdout(&o));
    assert_eq!(rows.len(), 5 * 4);
    for r in &rows {
        let n = num(&r[col(&h, "n")]);
        let ub1 = num(&r[col(&h, "UB1")]);
        let st = num(&r[col(&h, "S_tot")]);
        assert_eq!(num(&r[col(&h, "model_evals")]), n * 5.0);
        if n >= 100.0 {
            assert!(ub1 >= st, "n = {n}, {}: UB1 {ub1} < S_tot {st}", r[col(&h, "input")]);
        }
    }
}

#[test]
fn single_n_convergence_matches_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let text = "model.builtin = gfunction\nmodel.params.a = 0, 2\nsampler.n = 256\nanalyses = dgsm, bounds, sobol\nsobol.first_order = none\n";
    let cfg = write_config(dir.path(), "c.cfg", text);
    let conv = run(&["convergence", cfg.to_str().unwrap(), "--n", "256"]);
    let ana = run(&["analyze", cfg.to_str().unwrap()]);
    let (hc, rc) = table(&stdout(&conv));
    let (ha, ra) = table(&stdout(&ana));
    assert_eq!(rc.len(), 2);
    for i in 0..2 {
        for name in ["nu", "UB1", "S_tot", "variance"] {
            assert_eq!(rc[i][col(&hc, name)], ra[i][col(&ha, name)], "{name}");
        }
    }
}

#[test]
fn json_report_and_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report");
    let text = format!(
        "{}\noutput.format = both\noutput.path = {}\n",
        std::fs::read_to_string(repo_config("expression_normal.cfg")).unwrap().replace("output.format = json", ""),
        out.display()
    );
    let cfg = write_config(dir.path(), "e.cfg", &text);
    let o = run(&["analyze", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.with_extension("json")).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["N"], 8192);
    assert_eq!(json["delta"], 1e-5);
    assert!(json["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert_eq!(json["pairs"].as_array().unwrap().len(), 3);
    assert_eq!(json["groups"][0]["group"], serde_json::json!([2, 3]));
    let evals = json["ledger"]["model_evals"].as_u64().unwrap();
    let d = 3u64;
    let n = 8192u64;
    // x1 is normal, so no LB*: DGSM N(d+1), crossed N(1 + d + d(d-1)/2),
    // pick-freeze with B N(d+2) plus one evaluation per superset pair.
    assert_eq!(evals, n * (d + 1) + n * (1 + d + 3) + n * (d + 2) + 3 * n);
    assert!(json["warnings"].as_array().unwrap().iter().any(|w| w.as_str().unwrap().contains("LB1")));
    let csv = std::fs::read_to_string(out.with_extension("csv")).unwrap();
    let (h, rows) = table(&csv);
    for r in &rows {
        let st = num(&r[col(&h, "S_tot")]);
        let ost = num(&r[col(&h, "oracle_S_tot")]);
        let se = num(&r[col(&h, "S_tot_se")]);
        assert!((st - ost).abs() <= 4.0 * se + 1e-3, "{}: {st} vs {ost}", r[0]);
    }
    assert_eq!(rows[0][col(&h, "UB1")], "", "normal input has no UB1");
    assert_ne!(rows[0][col(&h, "normal_LB")], "");
    assert_ne!(rows[2][col(&h, "theorem1_lo")], "");
}

#[test]
fn oracle_flag_adds_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.cfg", "model.builtin = gfunction\nmodel.params.a = 0, 1\nsampler.n = 128\nanalyses = dgsm\n");
    let o = run(&["analyze", cfg.to_str().unwrap(), "--oracle"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (h, rows) = table(&stdout(&o));
    let s = num(&rows[0][col(&h, "oracle_S_tot")]);
    let v = (1.0 + 1.0 / 3.0) * (1.0 + 1.0 / 12.0) - 1.0;
    assert!((s - (1.0 / 3.0) * (1.0 + 1.0 / 12.0) / v).abs() < 1e-8);
    // Oracle quadrature is not charged to the sampling ledger.
    assert_eq!(rows[0][col(&h, "model_evals")], (128 * 3).to_string());
    let cfg = write_config(dir.path(), "c.cfg", "model.builtin = gfunction\nmodel.params.a = 0, 1, 2, 3, 4\nsampler.n = 128\nanalyses = dgsm\n");
    let o = run(&["analyze", cfg.to_str().unwrap(), "--oracle"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn poincare_subcommand() {
    let o = run(&["poincare", "normal(0, 2)"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let c: f64 = out.split('\t').next().unwrap().parse().unwrap();
    assert_eq!(c, 4.0);
    assert!(out.contains("Tabulated"));
    let o = run(&["poincare", "uniform(0, 1)"]);
    let c: f64 = stdout(&o).split('\t').next().unwrap().parse().unwrap();
    assert_eq!(c, 1.0 / std::f64::consts::PI.powi(2));
}
