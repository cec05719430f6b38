//! Random diagrams and transfer functions for property tests and benchmarks.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::blocks::{BlockKind, ParamShape};
use crate::diagram::{Block, Diagram, Endpoint, Link};
use crate::solver::{SimOptions, SolverKind};

const TEXT_CHARS: &[char] = &[
    'a', 'b', 'z', 'Q', '0', '7', ' ', '_', '-', '.', '&', '<', '>', '"', '\'', '\n', '\t', '\r',
    '%', ';', '#', 'é', 'ї', 'Ж', '中', '🙂', '=', '/',
];

const DIAGRAM_ATTRS: &[&str] = &[
    "realTimeScaling",
    "toleranceOnTime",
    "solver",
    "modified",
    "x-note",
    "ns:tag",
];

const BLOCK_ATTRS: &[&str] = &[
    "blockType",
    "simulationFunctionName",
    "simulationFunctionType",
    "style",
    "dependsOnU",
    "value",
    "x.y",
];

const OPAQUE_KINDS: &[&str] = &["SPLIT_f", "CLOCK_c", "BIGSOM_f", "my block", "X&Y"];

pub fn random_text<R: Rng>(rng: &mut R, max_len: usize) -> String {
    let n = rng.gen_range(0..=max_len);
    (0..n).map(|_| *TEXT_CHARS.choose(rng).unwrap()).collect()
}

fn random_float<R: Rng>(rng: &mut R) -> f64 {
    match rng.gen_range(0..4) {
        0 => rng.gen_range(-1e3..1e3),
        1 => rng.gen_range(-10i32..10) as f64,
        2 => rng.gen::<f64>() * 10f64.powi(rng.gen_range(-300..300)),
        _ => rng.gen_range(0.0..1.0),
    }
}

fn random_number_text<R: Rng>(rng: &mut R) -> String {
    let v = rng.gen_range(-100.0..100.0f64);
    match rng.gen_range(0..3) {
        0 => format!("{v:?}"),
        1 => format!("{}", v.round()),
        _ => format!("{:.3}", v.abs()),
    }
}

/// Raw parameter text: usually a valid expression, sometimes unset or garbage.
fn random_param<R: Rng>(rng: &mut R, shape: ParamShape) -> String {
    match rng.gen_range(0..10) {
        0 => "%s".into(),
        1 => random_text(rng, 6),
        _ => match shape {
            ParamShape::Scalar => random_number_text(rng),
            ParamShape::SignVector => {
                let n = rng.gen_range(1..=4);
                let signs: Vec<&str> = (0..n)
                    .map(|_| if rng.gen() { "+1" } else { "-1" })
                    .collect();
                format!("[{}]", signs.join(";"))
            }
            ParamShape::RationalInS => {
                let deg = rng.gen_range(0..3);
                let terms: Vec<String> = (0..=deg)
                    .map(|k| match k {
                        0 => random_number_text(rng),
                        1 => format!("{}*s", random_number_text(rng)),
                        _ => format!("({})*s^{k}", random_number_text(rng)),
                    })
                    .collect();
                terms.join("+")
            }
        },
    }
}

fn random_id<R: Rng>(rng: &mut R, d: &Diagram) -> String {
    loop {
        let id = match rng.gen_range(0..3) {
            0 => d.fresh_id(),
            1 => rng.gen_range(2..10_000u32).to_string(),
            _ => {
                let t = random_text(rng, 5);
                if t.is_empty() {
                    continue;
                }
                t
            }
        };
        if id != "0" && id != "1" && d.block(&id).is_none() && d.link(&id).is_none() {
            return id;
        }
    }
}

fn random_attrs<R: Rng>(rng: &mut R, pool: &[&str]) -> Vec<(String, String)> {
    let n = rng.gen_range(0..=3);
    (0..n)
        .map(|_| (pool.choose(rng).unwrap().to_string(), random_text(rng, 8)))
        .collect()
}

fn random_block<R: Rng>(rng: &mut R, d: &Diagram) -> Block {
    let id = random_id(rng, d);
    let kind = if rng.gen_range(0..6) == 0 {
        BlockKind::from_name(OPAQUE_KINDS.choose(rng).unwrap())
    } else {
        BlockKind::KNOWN.choose(rng).unwrap().clone()
    };
    let mut params: Vec<(String, String)> = Vec::new();
    let known = kind.info().map(|i| i.params).unwrap_or_default();
    for p in known {
        params.push((p.name.to_string(), random_param(rng, p.shape)));
    }
    for k in known.len()..known.len() + rng.gen_range(0..3) {
        params.push((format!("expr{k}"), random_text(rng, 6)));
    }
    let mut block = Block::new(id, kind, params);
    if !block.kind.is_known() {
        block.n_in = rng.gen_range(0..=3);
        block.n_out = rng.gen_range(0..=3);
    }
    block.position = (random_float(rng), random_float(rng));
    if rng.gen() {
        block.size = (rng.gen_range(1.0..200.0), rng.gen_range(1.0..200.0));
    }
    block.attrs = random_attrs(rng, BLOCK_ATTRS).into_iter().collect();
    block
}

/// A diagram satisfying every structural invariant, with arbitrary
/// parameters, attributes and wiring. It need not compile.
pub fn random_diagram<R: Rng>(rng: &mut R) -> Diagram {
    let mut d = Diagram::new(random_text(rng, 12));
    d.background = rng.gen_range(-5..100_000);
    d.settings = SimOptions {
        t0: random_float(rng),
        tf: random_float(rng),
        solver: if rng.gen() {
            SolverKind::Rk4
        } else {
            SolverKind::Adaptive
        },
        dt: rng.gen_range(1e-6..1.0),
        rtol: rng.gen_range(1e-12..1e-2),
        atol: rng.gen_range(1e-12..1e-2),
        max_step: if rng.gen() {
            Some(rng.gen_range(1e-3..10.0))
        } else {
            None
        },
    };
    d.attrs = random_attrs(rng, DIAGRAM_ATTRS).into_iter().collect();

    for _ in 0..rng.gen_range(0..=8) {
        let b = random_block(rng, &d);
        d.insert_block(b).expect("generated blocks are well formed");
    }
    let sources: Vec<(String, usize)> = d
        .blocks()
        .iter()
        .filter(|b| b.n_out > 0)
        .map(|b| (b.id.clone(), b.n_out))
        .collect();
    let sinks: Vec<(String, usize)> = d
        .blocks()
        .iter()
        .filter(|b| b.n_in > 0)
        .map(|b| (b.id.clone(), b.n_in))
        .collect();
    if !sources.is_empty() && !sinks.is_empty() {
        for _ in 0..rng.gen_range(0..=10) {
            let (sb, sn) = sources.choose(rng).unwrap();
            let (db, dn) = sinks.choose(rng).unwrap();
            let dst = Endpoint::new(db.clone(), rng.gen_range(0..*dn));
            if d.driver(&dst.block, dst.port).is_some() {
                continue;
            }
            let link = Link {
                id: random_id(rng, &d),
                src: Endpoint::new(sb.clone(), rng.gen_range(0..*sn)),
                dst,
            };
            d.insert_link(link)
                .expect("generated links are well formed");
        }
    }
    // shuffle insertion order so canonical ordering matters
    let mut shuffled = Diagram::new(d.title.clone());
    shuffled.background = d.background;
    shuffled.settings = d.settings.clone();
    shuffled.attrs = d.attrs.clone();
    let mut blocks = d.blocks().to_vec();
    blocks.shuffle(rng);
    for b in blocks {
        shuffled.insert_block(b).unwrap();
    }
    let mut links = d.links().to_vec();
    links.shuffle(rng);
    for l in links {
        shuffled.insert_link(l).unwrap();
    }
    shuffled
}

/// Random proper transfer function with denominator degree in `1..=max_degree`,
/// coefficients ascending. The leading denominator coefficient is kept away from zero.
pub fn random_proper_tf<R: Rng>(rng: &mut R, max_degree: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rng.gen_range(1..=max_degree);
    let mut den: Vec<f64> = (0..=n).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let lead = rng.gen_range(0.2..3.0);
    den[n] = if rng.gen() { lead } else { -lead };
    let m = rng.gen_range(0..=n);
    let num: Vec<f64> = (0..=m).map(|_| rng.gen_range(-5.0..5.0)).collect();
    (num, den)
}
