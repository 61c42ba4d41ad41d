//! Real-toolchain evaluation: `opt <flags>` → `llc` → `llvm-mca`.
//!
//! Cycle counts come from llvm-mca's static estimate ("Total Cycles"), so
//! absolute values are toolchain- and target-relative; pin `target_triple`
//! and `mca_args` in config for reproducible numbers. Autophase features come
//! from an external extractor binary when configured; without one, feature
//! vectors are all-zero and a warning is logged once (cycle-only workflows
//! such as tuning do not need features; evidence extraction does).

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use super::{read_ir_source, CycleCount, EvalOutcome, ProgramHandle, RawBackend};
use crate::config::BackendConfig;
use crate::error::{Error, Result};
use crate::features::AutophaseVector;
use crate::passes::PassSequence;

pub struct LlvmBackend {
    opt: PathBuf,
    llc: PathBuf,
    mca: PathBuf,
    autophase_bin: Option<PathBuf>,
    target_triple: Option<String>,
    mca_args: Vec<String>,
    timeout: Duration,
    warned_no_extractor: AtomicBool,
}

enum ToolRun {
    Done { status_ok: bool, stdout: String, stderr: String },
    TimedOut,
}

impl LlvmBackend {
    pub fn from_config(cfg: &BackendConfig) -> Self {
        let tool = |name: &str| -> PathBuf {
            match &cfg.llvm_bin {
                Some(dir) => dir.join(name),
                None => PathBuf::from(name),
            }
        };
        Self {
            opt: tool("opt"),
            llc: tool("llc"),
            mca: tool("llvm-mca"),
            autophase_bin: cfg.autophase_bin.clone(),
            target_triple: cfg.target_triple.clone(),
            mca_args: cfg.mca_args.clone(),
            timeout: Duration::from_secs(cfg.timeout_secs.max(1)),
            warned_no_extractor: AtomicBool::new(false),
        }
    }

    fn run_tool(&self, mut cmd: Command) -> Result<ToolRun> {
        cmd.stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        let mut child = cmd
            .spawn()
            .map_err(|e| Error::Environment(format!("cannot spawn {:?}: {e}", cmd.get_program())))?;
        let mut stdout_pipe = child.stdout.take().expect("piped stdout");
        let mut stderr_pipe = child.stderr.take().expect("piped stderr");
        let out_reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = stdout_pipe.read_to_end(&mut buf);
            buf
        });
        let err_reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = stderr_pipe.read_to_end(&mut buf);
            buf
        });

        let deadline = Instant::now() + self.timeout;
        let status = loop {
            match child.try_wait()? {
                Some(status) => break Some(status),
                None => {
                    if Instant::now() >= deadline {
                        let _ = child.kill();
                        let _ = child.wait();
                        break None;
                    }
                    std::thread::sleep(Duration::from_millis(10));
                }
            }
        };
        let stdout = String::from_utf8_lossy(&out_reader.join().unwrap_or_default()).into_owned();
        let stderr = String::from_utf8_lossy(&err_reader.join().unwrap_or_default()).into_owned();
        Ok(match status {
            Some(status) => ToolRun::Done {
                status_ok: status.success(),
                stdout,
                stderr,
            },
            None => ToolRun::TimedOut,
        })
    }

    /// Run the full pipeline for one flag list. Tool rejections map to
    /// `CompileError`, deadline overruns to `Timeout`.
    fn pipeline(&self, program: &ProgramHandle, flags: &[String]) -> Result<EvalOutcome> {
        let ir_text = match read_ir_source(&program.ir_source) {
            Ok(t) => t,
            Err(Error::Compile(msg)) => return Ok(EvalOutcome::CompileError { stderr: msg }),
            Err(e) => return Err(e),
        };
        let work = tempfile::tempdir()?;
        let input = work.path().join("input.ll");
        std::fs::write(&input, &ir_text)?;
        let opted = work.path().join("opted.ll");
        let asm = work.path().join("out.s");

        let mut opt_cmd = Command::new(&self.opt);
        opt_cmd.arg("-S");
        opt_cmd.args(flags);
        opt_cmd.arg(&input).arg("-o").arg(&opted);
        match self.run_tool(opt_cmd)? {
            ToolRun::Done { status_ok: false, stderr, .. } => {
                return Ok(EvalOutcome::CompileError { stderr })
            }
            ToolRun::TimedOut => return Ok(EvalOutcome::Timeout),
            ToolRun::Done { .. } => {}
        }

        let mut llc_cmd = Command::new(&self.llc);
        if let Some(triple) = &self.target_triple {
            llc_cmd.arg(format!("-mtriple={triple}"));
        }
        llc_cmd.arg(&opted).arg("-o").arg(&asm);
        match self.run_tool(llc_cmd)? {
            ToolRun::Done { status_ok: false, stderr, .. } => {
                return Ok(EvalOutcome::CompileError { stderr })
            }
            ToolRun::TimedOut => return Ok(EvalOutcome::Timeout),
            ToolRun::Done { .. } => {}
        }

        let mut mca_cmd = Command::new(&self.mca);
        if let Some(triple) = &self.target_triple {
            mca_cmd.arg(format!("-mtriple={triple}"));
        }
        mca_cmd.args(&self.mca_args);
        mca_cmd.arg(&asm);
        let (mca_out, mca_err) = match self.run_tool(mca_cmd)? {
            ToolRun::Done { status_ok: false, stderr, .. } => {
                return Ok(EvalOutcome::CompileError { stderr })
            }
            ToolRun::TimedOut => return Ok(EvalOutcome::Timeout),
            ToolRun::Done { stdout, stderr, .. } => (stdout, stderr),
        };
        let cycles = match parse_mca_cycles(&mca_out) {
            Some(c) => c,
            None => {
                return Ok(EvalOutcome::CompileError {
                    stderr: format!("llvm-mca output missing Total Cycles\n{mca_err}"),
                })
            }
        };

        let ir_after = std::fs::read_to_string(&opted)?;
        let features = self.extract_features(&opted)?;
        Ok(EvalOutcome::Ok {
            cycles: CycleCount(cycles.max(1)),
            features,
            ir_after,
        })
    }

    fn extract_features(&self, ir_path: &Path) -> Result<AutophaseVector> {
        let Some(bin) = &self.autophase_bin else {
            if !self.warned_no_extractor.swap(true, Ordering::Relaxed) {
                log::warn!(
                    "no autophase extractor configured; feature vectors will be all-zero \
                     (set backend.autophase_bin for evidence extraction)"
                );
            }
            return Ok(AutophaseVector::zero());
        };
        let mut cmd = Command::new(bin);
        cmd.arg(ir_path);
        match self.run_tool(cmd)? {
            ToolRun::Done { status_ok: true, stdout, .. } => {
                serde_json::from_str::<AutophaseVector>(stdout.trim())
                    .map_err(|e| Error::Parse(format!("bad extractor output: {e}")))
            }
            ToolRun::Done { stderr, .. } => {
                Err(Error::Compile(format!("feature extractor failed: {stderr}")))
            }
            ToolRun::TimedOut => Err(Error::Timeout(self.timeout.as_secs())),
        }
    }
}

/// Extract "Total Cycles:" from llvm-mca output.
pub fn parse_mca_cycles(output: &str) -> Option<u64> {
    for line in output.lines() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("Total Cycles:") {
            if let Ok(v) = rest.trim().parse::<u64>() {
                return Some(v);
            }
        }
    }
    None
}

impl RawBackend for LlvmBackend {
    fn evaluate_raw(&self, program: &ProgramHandle, seq: &PassSequence) -> Result<EvalOutcome> {
        self.pipeline(program, &seq.render())
    }

    fn baseline_raw(&self, program: &ProgramHandle) -> Result<EvalOutcome> {
        self.pipeline(program, &["-O3".to_string()])
    }

    fn features_of_ir(&self, ir: &str) -> Result<AutophaseVector> {
        let work = tempfile::tempdir()?;
        let path = work.path().join("features.ll");
        std::fs::write(&path, ir)?;
        self.extract_features(&path)
    }

    fn fingerprint(&self) -> String {
        format!(
            "llvm:{}:{}:{}",
            self.opt.display(),
            self.target_triple.as_deref().unwrap_or("native"),
            self.mca_args.join(" ")
        )
    }

    fn o3_seed_flags(&self) -> Vec<String> {
        // "--O3" is a vocabulary member; evaluating it runs the same pipeline
        // as the baseline, so elitist tuning can never end below -O3.
        vec!["--O3".to_string()]
    }

    fn check_ready(&self) -> Result<()> {
        for tool in [&self.opt, &self.llc, &self.mca] {
            let ok = Command::new(tool)
                .arg("--version")
                .stdin(Stdio::null())
                .stdout(Stdio::null())
                .stderr(Stdio::null())
                .status()
                .map(|s| s.success())
                .unwrap_or(false);
            if !ok {
                return Err(Error::Environment(format!(
                    "LLVM tool {} not runnable; install LLVM or set {} / backend.llvm_bin",
                    tool.display(),
                    crate::config::ENV_LLVM_BIN
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_total_cycles_line() {
        let out = "Iterations:        100\nInstructions:      300\nTotal Cycles:      1234\nTotal uOps:        400\n";
        assert_eq!(parse_mca_cycles(out), Some(1234));
        assert_eq!(parse_mca_cycles("no cycles here"), None);
    }

    #[test]
    fn missing_tools_fail_readiness() {
        let cfg = BackendConfig {
            llvm_bin: Some(PathBuf::from("/nonexistent/llvm/bin")),
            ..Default::default()
        };
        let backend = LlvmBackend::from_config(&cfg);
        assert!(matches!(backend.check_ready(), Err(Error::Environment(_))));
    }

    #[cfg(unix)]
    #[test]
    fn mock_extractor_round_trip() {
        use std::os::unix::fs::PermissionsExt;
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("extract.sh");
        let mut counts = vec![0u64; 56];
        counts[41] = 1;
        counts[50] = 1;
        counts[51] = 1;
        std::fs::write(
            &script,
            format!("#!/bin/sh\necho '{}'\n", serde_json::to_string(&counts).unwrap()),
        )
        .unwrap();
        std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();

        let cfg = BackendConfig {
            autophase_bin: Some(script),
            ..Default::default()
        };
        let backend = LlvmBackend::from_config(&cfg);
        let v = backend.features_of_ir("define i32 @f() { ret i32 0 }").unwrap();
        assert_eq!(v.get_named("NumRetInst"), Some(1));
        assert_eq!(v.get_named("TotalInsts"), Some(1));
    }

    #[cfg(unix)]
    #[test]
    fn tool_timeout_is_reported() {
        use std::os::unix::fs::PermissionsExt;
        let dir = tempfile::tempdir().unwrap();
        // stand-ins: opt hangs, so evaluation must time out
        let sleeper = dir.path().join("opt");
        std::fs::write(&sleeper, "#!/bin/sh\nsleep 30\n").unwrap();
        std::fs::set_permissions(&sleeper, std::fs::Permissions::from_mode(0o755)).unwrap();
        for name in ["llc", "llvm-mca"] {
            let p = dir.path().join(name);
            std::fs::write(&p, "#!/bin/sh\nexit 0\n").unwrap();
            std::fs::set_permissions(&p, std::fs::Permissions::from_mode(0o755)).unwrap();
        }
        let ir = dir.path().join("input.ll");
        std::fs::write(&ir, "define void @f() { ret void }\n").unwrap();

        let cfg = BackendConfig {
            llvm_bin: Some(dir.path().to_path_buf()),
            timeout_secs: 1,
            ..Default::default()
        };
        let backend = LlvmBackend::from_config(&cfg);
        let p = ProgramHandle::new("t", ir.display().to_string());
        let out = backend.pipeline(&p, &[]).unwrap();
        assert_eq!(out, EvalOutcome::Timeout);
    }
}
