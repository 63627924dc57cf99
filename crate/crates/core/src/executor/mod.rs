//! Running test cases against a target and harvesting their coverage.

pub mod toy;

use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::str::FromStr;
use std::time::{Duration, Instant};

use memmap2::MmapMut;
use wait_timeout::ChildExt;

use crate::coverage::{check_exponent, CoverageMap};
use crate::error::{CovrlError, Result};
use crate::reward::{ErrorPatterns, ExitDescriptor, Outcome};

pub const INPUT_PLACEHOLDER: &str = "@@";
pub const ENV_COV_PATH: &str = "COVRL_COV_PATH";
pub const ENV_SHM_PATH: &str = "COVRL_SHM_PATH";
pub const ENV_TRACE: &str = "COVRL_TRACE";
pub const ENV_MAP_SIZE: &str = "COVRL_MAP_SIZE";
pub const STDERR_HEAD_LEN: usize = 4096;

/// Stderr beyond this is not inspected for error names.
const STDERR_SCAN_LEN: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoverageChannel {
    /// The child writes the map to the file named in `COVRL_COV_PATH`.
    EnvFile,
    /// The child maps the file named in `COVRL_SHM_PATH` and counts in place.
    SharedRegion,
}

impl FromStr for CoverageChannel {
    type Err = CovrlError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "env-file" | "file" => Ok(CoverageChannel::EnvFile),
            "shared-region" | "shm" => Ok(CoverageChannel::SharedRegion),
            _ => Err(CovrlError::config(format!("unknown coverage channel {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetConfig {
    /// Command and arguments; exactly one element is the `@@` placeholder.
    pub argv: Vec<String>,
    pub channel: CoverageChannel,
    pub timeout_ms: u64,
    pub map_exponent: u32,
    pub memory_limit_mb: Option<u64>,
}

impl TargetConfig {
    pub fn validate(&self) -> Result<()> {
        check_exponent(self.map_exponent)?;
        if self.timeout_ms == 0 {
            return Err(CovrlError::config("timeout_ms must be positive"));
        }
        let holders = self.argv.iter().filter(|a| *a == INPUT_PLACEHOLDER).count();
        if holders != 1 {
            return Err(CovrlError::config(format!(
                "target argv needs exactly one {INPUT_PLACEHOLDER} placeholder, found {holders}"
            )));
        }
        if self.argv[0] == INPUT_PLACEHOLDER {
            return Err(CovrlError::config("target argv must start with a program"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ExecutionResult {
    pub outcome: Outcome,
    pub coverage: CoverageMap,
    pub wall_ms: u64,
    pub stderr_head: Vec<u8>,
}

pub trait Executor {
    fn map_exponent(&self) -> u32;

    fn execute(&mut self, case: &[u8]) -> Result<ExecutionResult>;
}

/// Spawns the target once per test case.
pub struct ProcessExecutor {
    cfg: TargetConfig,
    patterns: ErrorPatterns,
    input_path: PathBuf,
    stderr_path: PathBuf,
    cov_path: PathBuf,
    region: Option<MmapMut>,
    _workdir: Option<tempfile::TempDir>,
}

impl ProcessExecutor {
    /// Scratch files go under `workdir`, or a fresh temporary directory.
    pub fn new(cfg: TargetConfig, workdir: Option<&Path>) -> Result<Self> {
        cfg.validate()?;
        let program = Path::new(&cfg.argv[0]);
        if program.components().count() > 1 && !program.exists() {
            return Err(CovrlError::config(format!("target binary {} not found", program.display())));
        }
        let (dir, guard) = match workdir {
            Some(d) => {
                fs::create_dir_all(d)?;
                (d.to_path_buf(), None)
            }
            None => {
                let t = tempfile::Builder::new().prefix("covrl-exec-").tempdir()?;
                (t.path().to_path_buf(), Some(t))
            }
        };
        let map_len = 1usize << cfg.map_exponent;
        let cov_path = dir.join(".cur_cov");
        let region = match cfg.channel {
            CoverageChannel::SharedRegion => {
                let f = OpenOptions::new()
                    .read(true)
                    .write(true)
                    .create(true)
                    .truncate(true)
                    .open(&cov_path)?;
                f.set_len(map_len as u64)?;
                // SAFETY: the file is private to this executor; the child only
                // writes into it while we wait for it.
                Some(unsafe { MmapMut::map_mut(&f)? })
            }
            CoverageChannel::EnvFile => None,
        };
        Ok(ProcessExecutor {
            patterns: ErrorPatterns::default(),
            input_path: dir.join(".cur_input"),
            stderr_path: dir.join(".cur_stderr"),
            cov_path,
            region,
            cfg,
            _workdir: guard,
        })
    }

    pub fn with_patterns(mut self, patterns: ErrorPatterns) -> Self {
        self.patterns = patterns;
        self
    }

    pub fn config(&self) -> &TargetConfig {
        &self.cfg
    }

    fn reset_coverage(&mut self) -> Result<()> {
        match self.region.as_mut() {
            Some(r) => r.fill(0),
            None => {
                if self.cov_path.exists() {
                    fs::remove_file(&self.cov_path)?;
                }
            }
        }
        Ok(())
    }

    fn harvest_coverage(&self) -> Result<CoverageMap> {
        let map_len = 1usize << self.cfg.map_exponent;
        let bytes = match &self.region {
            Some(r) => r.to_vec(),
            None => match fs::read(&self.cov_path) {
                Ok(mut b) => {
                    b.resize(map_len, 0);
                    b
                }
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => vec![0; map_len],
                Err(e) => return Err(e.into()),
            },
        };
        CoverageMap::from_bytes(self.cfg.map_exponent, bytes)
    }

    fn command(&self) -> Command {
        let args: Vec<&str> = self
            .cfg
            .argv
            .iter()
            .map(|a| {
                if a == INPUT_PLACEHOLDER {
                    self.input_path.to_str().unwrap_or(INPUT_PLACEHOLDER)
                } else {
                    a.as_str()
                }
            })
            .collect();
        let mut cmd = Command::new(args[0]);
        cmd.args(&args[1..])
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .env(ENV_MAP_SIZE, (1usize << self.cfg.map_exponent).to_string());
        match self.cfg.channel {
            CoverageChannel::EnvFile => cmd.env(ENV_COV_PATH, &self.cov_path),
            CoverageChannel::SharedRegion => cmd.env(ENV_SHM_PATH, &self.cov_path),
        };
        if let Some(mb) = self.cfg.memory_limit_mb {
            limit_memory(&mut cmd, mb);
        }
        cmd
    }
}

#[cfg(unix)]
fn limit_memory(cmd: &mut Command, mb: u64) {
    use std::os::unix::process::CommandExt;
    let bytes = mb.saturating_mul(1 << 20) as libc::rlim_t;
    // SAFETY: setrlimit is async-signal-safe and touches no parent state.
    unsafe {
        cmd.pre_exec(move || {
            let lim = libc::rlimit {
                rlim_cur: bytes,
                rlim_max: bytes,
            };
            if libc::setrlimit(libc::RLIMIT_AS, &lim) != 0 {
                return Err(std::io::Error::last_os_error());
            }
            Ok(())
        });
    }
}

#[cfg(not(unix))]
fn limit_memory(_cmd: &mut Command, _mb: u64) {}

#[cfg(unix)]
fn exit_descriptor(status: std::process::ExitStatus) -> ExitDescriptor {
    use std::os::unix::process::ExitStatusExt;
    match status.signal() {
        Some(sig) => ExitDescriptor::Signal(sig),
        None => ExitDescriptor::Code(status.code().unwrap_or(-1)),
    }
}

#[cfg(not(unix))]
fn exit_descriptor(status: std::process::ExitStatus) -> ExitDescriptor {
    ExitDescriptor::Code(status.code().unwrap_or(-1))
}

impl Executor for ProcessExecutor {
    fn map_exponent(&self) -> u32 {
        self.cfg.map_exponent
    }

    fn execute(&mut self, case: &[u8]) -> Result<ExecutionResult> {
        fs::write(&self.input_path, case)?;
        self.reset_coverage()?;
        let stderr = File::create(&self.stderr_path)?;
        let start = Instant::now();
        let mut child = self
            .command()
            .stderr(stderr)
            .spawn()
            .map_err(|e| CovrlError::Target(format!("cannot spawn {}: {e}", self.cfg.argv[0])))?;
        let timeout = Duration::from_millis(self.cfg.timeout_ms);
        let status = child.wait_timeout(timeout)?;
        let exit = match status {
            Some(s) => Some(exit_descriptor(s)),
            None => {
                let _ = child.kill();
                child.wait()?;
                None
            }
        };
        let wall_ms = start.elapsed().as_millis() as u64;

        let mut stderr = Vec::new();
        let mut f = File::open(&self.stderr_path)?;
        f.seek(SeekFrom::Start(0))?;
        f.take(STDERR_SCAN_LEN).read_to_end(&mut stderr)?;
        let outcome = match exit {
            None => Outcome::Timeout,
            Some(exit) => self.patterns.classify(&stderr, exit),
        };
        stderr.truncate(STDERR_HEAD_LEN);
        Ok(ExecutionResult {
            outcome,
            coverage: self.harvest_coverage()?,
            wall_ms,
            stderr_head: stderr,
        })
    }
}

/// Runs the toy interpreter inside this process. Crashes are reported the
/// same way the standalone binary reports them, without raising a signal.
pub struct InProcessToy {
    exponent: u32,
    patterns: ErrorPatterns,
    pid: u32,
    runs: u64,
}

impl InProcessToy {
    pub fn new(exponent: u32) -> Result<Self> {
        check_exponent(exponent)?;
        Ok(InProcessToy {
            exponent,
            patterns: ErrorPatterns::default(),
            pid: std::process::id(),
            runs: 0,
        })
    }
}

impl Executor for InProcessToy {
    fn map_exponent(&self) -> u32 {
        self.exponent
    }

    fn execute(&mut self, case: &[u8]) -> Result<ExecutionResult> {
        let start = Instant::now();
        let mut cov = CoverageMap::new(self.exponent)?;
        let exit = {
            let mut tracer = toy::Tracer::new(cov.counters_mut(), None);
            toy::run(case, &mut tracer)
        };
        self.runs += 1;
        let addr = 0x6020_0000_0000 + (self.runs as usize % 0x10_0000) * 0x40;
        let (stderr, desc) = toy_stderr(&exit, self.pid, addr);
        let outcome = self.patterns.classify(stderr.as_bytes(), desc);
        let mut head = stderr.into_bytes();
        head.truncate(STDERR_HEAD_LEN);
        Ok(ExecutionResult {
            outcome,
            coverage: cov,
            wall_ms: start.elapsed().as_millis() as u64,
            stderr_head: head,
        })
    }
}

/// The stderr text and exit status the toy binary produces for `exit`.
pub fn toy_stderr(exit: &toy::ToyExit, pid: u32, addr: usize) -> (String, ExitDescriptor) {
    match exit {
        toy::ToyExit::Ok => (String::new(), ExitDescriptor::Code(0)),
        toy::ToyExit::Error { .. } => (
            format!("{}\n", exit.message().unwrap_or_default()),
            ExitDescriptor::Code(exit.exit_code()),
        ),
        toy::ToyExit::Crash(bug) => (bug.report(pid, addr), ExitDescriptor::Signal(bug.signal())),
    }
}

/// Strips addresses and numbers so that reports differing only in pointer
/// values, pids, or line numbers compare equal.
pub fn normalize_stderr_line(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '0' && matches!(chars.peek(), Some('x' | 'X')) {
            chars.next();
            while chars.peek().is_some_and(|d| d.is_ascii_hexdigit()) {
                chars.next();
            }
            out.push_str("0x");
        } else if c.is_ascii_digit() {
            while chars.peek().is_some_and(|d| d.is_ascii_digit()) {
                chars.next();
            }
            out.push('N');
        } else {
            out.push(c);
        }
    }
    out.trim_end().to_string()
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(state: u64, bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(state, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Crash bucket id: a hash of the signal and the first five normalized
/// stderr lines. Returns `None` for non-crash results.
pub fn fingerprint_crash(res: &ExecutionResult) -> Option<u64> {
    let Outcome::Crash { signal } = res.outcome else {
        return None;
    };
    Some(fingerprint(signal, &res.stderr_head))
}

pub fn fingerprint(signal: i32, stderr: &[u8]) -> u64 {
    let text = String::from_utf8_lossy(stderr);
    let mut h = fnv1a(FNV_OFFSET, &signal.to_le_bytes());
    for line in text.lines().filter(|l| !l.starts_with("[trace]")).take(5) {
        h = fnv1a(h, normalize_stderr_line(line).as_bytes());
        h = fnv1a(h, b"\n");
    }
    h
}

/// Writes `cov` as the toy binary does for the file channel.
pub fn write_coverage_file(path: &Path, cov: &[u8]) -> Result<()> {
    let mut f = File::create(path)?;
    f.write_all(cov)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::SemanticKind;

    #[test]
    fn argv_validation() {
        let mut cfg = TargetConfig {
            argv: vec!["prog".into(), "@@".into()],
            channel: CoverageChannel::EnvFile,
            timeout_ms: 100,
            map_exponent: 16,
            memory_limit_mb: None,
        };
        assert!(cfg.validate().is_ok());
        cfg.argv.push("@@".into());
        assert!(cfg.validate().is_err());
        cfg.argv.truncate(1);
        assert!(cfg.validate().is_err());
        cfg.argv.push("@@".into());
        cfg.timeout_ms = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn normalization_strips_noise() {
        assert_eq!(
            normalize_stderr_line("==123==ERROR: overflow on address 0x6020000000f1 at pc 0xdeadbeef"),
            "==N==ERROR: overflow on address 0x at pc 0x"
        );
    }

    #[test]
    fn in_process_outcomes() {
        let mut ex = InProcessToy::new(16).unwrap();
        assert_eq!(ex.execute(b"1+2;").unwrap().outcome, Outcome::Pass);
        assert_eq!(ex.execute(b"1+;").unwrap().outcome, Outcome::SyntaxError);
        assert_eq!(
            ex.execute(b"let a = [1,2][5];").unwrap().outcome,
            Outcome::SemanticError(SemanticKind::Range)
        );
        let pop = b"let a = [1,2,3,4]; while (a.length > 0) { a.pop(); } a.pop();";
        let r1 = ex.execute(pop).unwrap();
        let r2 = ex.execute(pop).unwrap();
        assert_eq!(r1.outcome, Outcome::Crash { signal: libc::SIGSEGV });
        assert_ne!(r1.stderr_head, r2.stderr_head);
        assert_eq!(fingerprint_crash(&r1), fingerprint_crash(&r2));
    }

    #[test]
    fn distinct_bugs_distinct_buckets() {
        let mut seen = std::collections::HashSet::new();
        for bug in toy::PlantedBug::ALL {
            seen.insert(fingerprint(bug.signal(), bug.report(1, 0x10).as_bytes()));
        }
        assert_eq!(seen.len(), 3);
    }
}
