#![allow(dead_code)]

use std::path::PathBuf;

use xcosw_core::{parse_xcos_xml, Diagram, Endpoint};

pub fn model_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../models")
        .join(name)
}

pub fn load(name: &str) -> Diagram {
    let bytes = std::fs::read(model_path(name)).unwrap();
    parse_xcos_xml(&bytes).unwrap()
}

pub fn p(kv: &[(&str, &str)]) -> Vec<(String, String)> {
    kv.iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

pub fn wire(d: &mut Diagram, a: &str, ap: usize, b: &str, bp: usize) {
    d.connect(Endpoint::new(a, ap), Endpoint::new(b, bp))
        .unwrap();
}

pub fn add(d: &mut Diagram, kind: &str, kv: &[(&str, &str)]) -> String {
    d.add_block(kind, p(kv), (0.0, 0.0)).unwrap()
}

/// source -> CLR(num/den) -> scope; returns (diagram, scope id).
pub fn driven_lag(source: (&str, &[(&str, &str)]), num: &str, den: &str) -> (Diagram, String) {
    let mut d = Diagram::default();
    let s = add(&mut d, source.0, source.1);
    let c = add(&mut d, "CLR", &[("num", num), ("den", den)]);
    let sc = add(&mut d, "CSCOPE", &[]);
    wire(&mut d, &s, 0, &c, 0);
    wire(&mut d, &c, 0, &sc, 0);
    (d, sc)
}

/// Linear interpolation of a recorded series at `t`.
pub fn interp(times: &[f64], values: &[f64], t: f64) -> f64 {
    let i = times.partition_point(|&x| x < t);
    if i == 0 {
        return values[0];
    }
    if i == times.len() {
        return values[times.len() - 1];
    }
    if times[i] == t {
        return values[i];
    }
    let (t0, t1) = (times[i - 1], times[i]);
    let w = (t - t0) / (t1 - t0);
    values[i - 1] * (1.0 - w) + values[i] * w
}
