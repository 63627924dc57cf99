#![allow(dead_code)]

use std::path::{Path, PathBuf};

use covrl::config::Config;
use covrl::coverage::write_state;
use covrl::executor::InProcessToy;
use covrl::fuzzer::{read_corpus, Campaign, FuzzConfig};

pub const TOY: &str = env!("CARGO_BIN_EXE_covrl-toy");
pub const COVRL: &str = env!("CARGO_BIN_EXE_covrl");

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

/// `toy` spawned from the freshly built binary.
pub fn toy_target() -> String {
    format!("{TOY} @@")
}

pub fn toy_config() -> Config {
    let mut cfg = Config::default();
    cfg.target = toy_target();
    cfg
}

/// Campaign warmed up on the fixture seeds, in process.
pub fn warmed_campaign(exp: u32) -> Campaign {
    let corpus = read_corpus(&fixture("seeds")).unwrap();
    let mut ex = InProcessToy::new(exp).unwrap();
    let mut c = Campaign::new(FuzzConfig::default(), exp, None).unwrap();
    c.warm_up(&corpus, &mut ex).unwrap();
    c
}

/// Writes the warmed-up weight and virgin maps to `path`.
pub fn write_warm_state(path: &Path, exp: u32) -> Campaign {
    let c = warmed_campaign(exp);
    let mut buf = Vec::new();
    write_state(&mut buf, c.weights(), c.virgin()).unwrap();
    std::fs::write(path, buf).unwrap();
    c
}

/// Reference idf: (1/sqrt(M)) * ln(N / (1 + df)).
pub fn oracle_idf(m: usize, n: u64, df: u64) -> f64 {
    (1.0 / (m as f64).sqrt()) * ((n as f64) / (1.0 + df as f64)).ln()
}
