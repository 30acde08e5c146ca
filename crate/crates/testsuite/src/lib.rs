//! Helpers shared by the acceptance checks: fixture lookup and an in-process
//! `claimcheck` invocation.

use std::path::{Path, PathBuf};

/// Root of the `fixtures/` directory shipped with the workspace.
pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// Output of one in-process `claimcheck` run.
#[derive(Debug)]
pub struct Invocation {
    pub code: u8,
    pub stdout: Vec<u8>,
    pub stderr: String,
}

/// Runs `claimcheck <args>` in this process.
pub fn claimcheck<I, S>(args: I) -> Invocation
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let argv: Vec<std::ffi::OsString> = std::iter::once("claimcheck".into())
        .chain(args.into_iter().map(|a| a.as_ref().to_owned()))
        .collect();
    let mut stdout = Vec::new();
    let mut stderr = Vec::new();
    let code = claimcheck_cli::run_from(argv, &mut stdout, &mut stderr);
    Invocation {
        code,
        stdout,
        stderr: String::from_utf8_lossy(&stderr).into_owned(),
    }
}
