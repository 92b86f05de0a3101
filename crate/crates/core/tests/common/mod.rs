//! Shared fixtures for integration tests.
#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use citysim::engine::{Scenario, SimConfig, Simulation};
use citysim::oracle::{
    parse_prompt, stub, Oracle, OracleBackend, OracleError, OracleRequest, Repair, Reply,
};
use citysim::persona::generate_population;
use citysim::world::{load_city, CityMap, GridCitySpec};
use serde_json::{json, Value};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn grid_4x4() -> CityMap {
    load_city(fixture("grid_4x4.json")).expect("fixture city")
}

/// Config for an `n`-agent stub run on a generated 4x4 grid.
pub fn config(n: usize, days: u64, seed: u64) -> SimConfig {
    let mut c = SimConfig {
        days,
        seed,
        grid: GridCitySpec {
            rows: 4,
            cols: 4,
            pois_per_area: 20,
            seed: 1,
            ..Default::default()
        },
        ..Default::default()
    };
    c.population.n = n;
    c
}

pub fn stub_sim(config: SimConfig) -> Simulation {
    Simulation::from_config(config).expect("simulation")
}

pub fn sim_on(city: CityMap, n: usize, days: u64, seed: u64, oracle: Oracle) -> Simulation {
    let personas = generate_population(n, &city, seed, &Default::default()).expect("population");
    Simulation::new(
        config(n, days, seed),
        city,
        personas,
        oracle,
        Scenario::default(),
    )
    .expect("simulation")
}

/// Backend that never answers.
pub struct Down;

impl OracleBackend for Down {
    fn complete(&self, _: &OracleRequest, _: Option<&Repair>) -> Result<Reply, OracleError> {
        Err(OracleError::Unavailable("offline".into()))
    }
}

/// Minimal chat-completions server answering with the stub's rules, so an
/// http run has a known, deterministic counterpart.
pub struct MockLlm {
    pub base_url: String,
    pub requests: Arc<AtomicU64>,
}

fn handle(stream: TcpStream, seed: u64, requests: Arc<AtomicU64>) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut out = stream;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Ok(());
        }
        let mut len = 0usize;
        loop {
            let mut h = String::new();
            reader.read_line(&mut h)?;
            let h = h.trim_end();
            if h.is_empty() {
                break;
            }
            if let Some((k, v)) = h.split_once(':') {
                if k.eq_ignore_ascii_case("content-length") {
                    len = v.trim().parse().unwrap_or(0);
                }
            }
        }
        let mut body = vec![0; len];
        reader.read_exact(&mut body)?;
        requests.fetch_add(1, Ordering::Relaxed);
        let req: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
        let prompt = req["messages"][1]["content"].as_str().unwrap_or("");
        let (status, reply) = match parse_prompt(prompt) {
            Some(r) => {
                let answer = stub::answer(r.kind, &r.context, seed, stub::DEFAULT_CONVERSE_NOISE);
                let content = format!("Here you go.\n```json\n{answer}\n```");
                (
                    "200 OK",
                    json!({"choices": [{"message": {"role": "assistant", "content": content}}]}),
                )
            }
            None => ("400 Bad Request", json!({"error": "unparseable prompt"})),
        };
        let text = reply.to_string();
        write!(
            out,
            "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{text}",
            text.len()
        )?;
        out.flush()?;
    }
}

pub fn spawn_mock_llm(seed: u64) -> MockLlm {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
    let addr = listener.local_addr().unwrap();
    let requests = Arc::new(AtomicU64::new(0));
    let counter = requests.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            let counter = counter.clone();
            std::thread::spawn(move || {
                let _ = handle(stream, seed, counter);
            });
        }
    });
    MockLlm {
        base_url: format!("http://{addr}/v1"),
        requests,
    }
}
