//! Result export: CSV and JSON.

use crate::solver::SimulationResult;

/// CSV with a `t` column then one column per probe. Values use the shortest
/// text that parses back to the same `f64`.
pub fn export_csv(result: &SimulationResult) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let header = std::iter::once("t").chain(result.signals.iter().map(|s| s.probe.as_str()));
    w.write_record(header).expect("writing to memory");
    for (i, t) in result.times.iter().enumerate() {
        let row = std::iter::once(format!("{t:?}"))
            .chain(result.signals.iter().map(|s| format!("{:?}", s.values[i])));
        w.write_record(row).expect("writing to memory");
    }
    w.into_inner().expect("writing to memory")
}

/// The result as JSON: `times`, `signals` (probe, values) and `metadata`.
pub fn export_json(result: &SimulationResult) -> Vec<u8> {
    serde_json::to_vec(result).expect("results always serialize")
}
