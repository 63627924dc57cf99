//! Standalone toy interpreter target.
//!
//! Usage: `covrl-toy <testcase>`. Coverage goes to the file named by
//! `COVRL_COV_PATH`, or into the region mapped from `COVRL_SHM_PATH`.
//! `COVRL_TRACE=1` echoes every edge hit to stderr.

use std::fs::OpenOptions;
use std::io::Write;
use std::process::ExitCode;

use covrl::executor::toy::{self, ToyExit};
use covrl::executor::{ENV_COV_PATH, ENV_MAP_SIZE, ENV_SHM_PATH, ENV_TRACE};
use covrl::coverage::DEFAULT_MAP_EXPONENT;

fn main() -> ExitCode {
    let Some(path) = std::env::args_os().nth(1) else {
        eprintln!("usage: covrl-toy <testcase>");
        return ExitCode::from(2);
    };
    let source = match std::fs::read(&path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("covrl-toy: cannot read {}: {e}", path.to_string_lossy());
            return ExitCode::from(2);
        }
    };

    let shm = std::env::var_os(ENV_SHM_PATH).and_then(|p| {
        let f = OpenOptions::new().read(true).write(true).open(p).ok()?;
        // SAFETY: the fuzzer owns the file and waits for us to exit.
        unsafe { memmap2::MmapMut::map_mut(&f).ok() }
    });
    let mut shm = shm.filter(|m| m.len().is_power_of_two());
    let mut local = match &shm {
        Some(_) => Vec::new(),
        None => vec![0u8; 1 << DEFAULT_MAP_EXPONENT],
    };
    let cov_path = std::env::var_os(ENV_COV_PATH);
    if shm.is_none() {
        if let Some(len) = std::env::var(ENV_MAP_SIZE).ok().and_then(|v| v.parse::<usize>().ok()) {
            if len.is_power_of_two() && len >= 256 {
                local = vec![0u8; len];
            }
        }
    }

    let tracing = std::env::var_os(ENV_TRACE).is_some_and(|v| v == "1");
    let mut stderr = std::io::stderr().lock();
    let exit = {
        let cov: &mut [u8] = match shm.as_mut() {
            Some(m) => &mut m[..],
            None => &mut local,
        };
        let trace: Option<&mut dyn Write> = if tracing { Some(&mut stderr) } else { None };
        let mut tracer = toy::Tracer::new(cov, trace);
        toy::run(&source, &mut tracer)
    };

    if let Some(m) = shm.as_ref() {
        let _ = m.flush();
    } else if let Some(p) = cov_path {
        let _ = std::fs::write(p, &local);
    }

    match exit {
        ToyExit::Ok => ExitCode::SUCCESS,
        ToyExit::Error { .. } => {
            let _ = writeln!(stderr, "{}", exit.message().unwrap_or_default());
            ExitCode::from(1)
        }
        ToyExit::Crash(bug) => {
            let probe = Box::new(0u64);
            let addr = &*probe as *const u64 as usize;
            let _ = write!(stderr, "{}", bug.report(std::process::id(), addr));
            let _ = stderr.flush();
            // SAFETY: raising a signal on ourselves; default disposition ends the process.
            unsafe {
                libc::signal(bug.signal(), libc::SIG_DFL);
                libc::raise(bug.signal());
            }
            ExitCode::from(128 + bug.signal() as u8)
        }
    }
}
