mod common;

use citysim::engine::JsonlBuffer;
use citysim::oracle::{BackendKind, Oracle, OracleConfig};
use common::*;

fn run_with(oracle: OracleConfig) -> (Vec<u8>, u64) {
    let city = grid_4x4();
    let oracle = Oracle::from_config(&oracle, 21).unwrap();
    let mut sim = sim_on(city, 4, 1, 21, oracle);
    let mut buf = JsonlBuffer::default();
    let summary = sim.run(&mut buf).unwrap();
    sim.oracle().flush().unwrap();
    (buf.0, summary.oracle_failures)
}

#[test]
fn recorded_http_run_replays_identically() {
    let server = spawn_mock_llm(21);
    let dir = tempfile::tempdir().unwrap();
    let record = dir.path().join("oracle.jsonl");
    let http = OracleConfig {
        backend: BackendKind::Http,
        base_url: Some(server.base_url.clone()),
        model: Some("mock".into()),
        timeout_ms: 5_000,
        backoff_base_ms: 1,
        record_path: Some(record.clone()),
        ..Default::default()
    };
    let (live, failures) = run_with(http);
    assert_eq!(failures, 0);
    assert!(server.requests.load(std::sync::atomic::Ordering::Relaxed) > 50);

    let replay = OracleConfig {
        backend: BackendKind::Replay,
        replay_path: Some(record),
        ..Default::default()
    };
    let (replayed, failures) = run_with(replay);
    assert_eq!(failures, 0);
    assert_eq!(live, replayed);

    // The mock answers with the stub's rules, so the stub run matches too.
    let (stub, _) = run_with(OracleConfig::default());
    assert_eq!(stub, live);
}
