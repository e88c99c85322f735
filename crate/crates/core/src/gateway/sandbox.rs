//! Runs model-written programs in a child interpreter.
//!
//! Each run gets a fresh empty temp directory as its working directory, a
//! cleared environment, an address-space limit, its own process group (killed
//! as a whole on timeout) and, where the kernel allows it, a private network
//! namespace. For Python interpreters a prelude installs an audit hook that
//! rejects file access outside the temp directory and the interpreter's own
//! library paths, socket creation, and process spawning.

use std::fs;
use std::io::Read;
use std::os::unix::process::CommandExt;
use std::process::{Command, Stdio};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

const MAX_CAPTURE: usize = 1 << 20;

const PYTHON_GUARD: &str = r#"def _install():
    import os, sys, sysconfig
    roots = {os.path.realpath(os.getcwd())}
    for key in ("stdlib", "platstdlib", "purelib", "platlib"):
        p = sysconfig.get_paths().get(key)
        if p:
            roots.add(os.path.realpath(p))
    for p in sys.path:
        if p and os.path.isdir(p):
            roots.add(os.path.realpath(p))
    extra = {"/dev/null", "/dev/urandom"}
    roots = tuple(roots)
    realpath, fsdecode, sep = os.path.realpath, os.fsdecode, os.sep
    def inside(path):
        if isinstance(path, int):
            return True
        p = realpath(fsdecode(path))
        return p in extra or any(p == r or p.startswith(r + sep) for r in roots)
    def hook(event, args):
        if event in ("open", "os.listdir", "os.scandir", "os.chdir", "os.remove", "os.rename", "os.mkdir"):
            if args and args[0] is not None and not inside(args[0]):
                raise PermissionError("sandbox: access denied: %r" % (args[0],))
        elif event.startswith("socket.") or event.startswith("ctypes."):
            raise PermissionError("sandbox: %s denied" % event)
        elif event in ("subprocess.Popen", "os.system", "os.exec", "os.posix_spawn", "os.fork", "os.forkpty", "os.spawn", "pty.spawn", "os.kill", "os.killpg"):
            raise PermissionError("sandbox: %s denied" % event)
    sys.addaudithook(hook)
_install()
del _install
"#;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SandboxResult {
    pub stdout: String,
    pub exit_status: i32,
    pub timed_out: bool,
    pub stderr: String,
}

pub trait ProgramExecutor: Send + Sync {
    fn execute(&self, code: &str) -> SandboxResult;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SandboxLimits {
    pub wall_ms: u64,
    pub mem_bytes: u64,
}

impl Default for SandboxLimits {
    fn default() -> Self {
        Self { wall_ms: 10_000, mem_bytes: 1 << 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SandboxConfig {
    /// Interpreter command and leading arguments; the program path is appended.
    pub interpreter: Vec<String>,
    pub limits: SandboxLimits,
    /// Prepend the Python audit-hook prelude.
    pub python_guard: bool,
    /// Try to move the child into an empty network namespace.
    pub isolate_network: bool,
    pub max_processes: usize,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        Self {
            interpreter: vec!["python3".into(), "-I".into()],
            limits: SandboxLimits::default(),
            python_guard: true,
            isolate_network: true,
            max_processes: 8,
        }
    }
}

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("sandbox interpreter is not configured")]
    NoInterpreter,
    #[error("sandbox interpreter '{command}' cannot be started: {reason}")]
    InterpreterMissing { command: String, reason: String },
}

pub struct Sandbox {
    config: SandboxConfig,
    running: Mutex<usize>,
    slot_freed: Condvar,
}

impl Sandbox {
    /// Checks that the interpreter starts; failures surface here, not per call.
    pub fn new(config: SandboxConfig) -> Result<Self, SandboxError> {
        let Some(cmd) = config.interpreter.first() else {
            return Err(SandboxError::NoInterpreter);
        };
        let status = Command::new(cmd)
            .arg("--version")
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()
            .map_err(|e| SandboxError::InterpreterMissing { command: cmd.clone(), reason: e.to_string() })?;
        if !status.success() {
            return Err(SandboxError::InterpreterMissing {
                command: cmd.clone(),
                reason: format!("'--version' exited with {status}"),
            });
        }
        Ok(Self { config, running: Mutex::new(0), slot_freed: Condvar::new() })
    }

    pub fn config(&self) -> &SandboxConfig {
        &self.config
    }

    fn acquire(&self) {
        let cap = self.config.max_processes.max(1);
        let mut n = self.running.lock().expect("sandbox slots poisoned");
        while *n >= cap {
            n = self.slot_freed.wait(n).expect("sandbox slots poisoned");
        }
        *n += 1;
    }

    fn release(&self) {
        *self.running.lock().expect("sandbox slots poisoned") -= 1;
        self.slot_freed.notify_one();
    }

    fn run(&self, code: &str) -> Result<SandboxResult, String> {
        let dir = tempfile::tempdir().map_err(|e| format!("cannot create temp dir: {e}"))?;
        let program = dir.path().join("program.py");
        let source = if self.config.python_guard { format!("{PYTHON_GUARD}{code}") } else { code.to_string() };
        fs::write(&program, source).map_err(|e| format!("cannot write program: {e}"))?;

        let mut cmd = Command::new(&self.config.interpreter[0]);
        cmd.args(&self.config.interpreter[1..])
            .arg(&program)
            .current_dir(dir.path())
            .env_clear()
            .env("PATH", "/usr/local/bin:/usr/bin:/bin")
            .env("PYTHONDONTWRITEBYTECODE", "1")
            .env("PYTHONIOENCODING", "utf-8")
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        let mem = self.config.limits.mem_bytes;
        let isolate = self.config.isolate_network;
        // SAFETY: only async-signal-safe libc calls between fork and exec.
        unsafe {
            cmd.pre_exec(move || {
                libc::setpgid(0, 0);
                let lim = libc::rlimit { rlim_cur: mem as libc::rlim_t, rlim_max: mem as libc::rlim_t };
                libc::setrlimit(libc::RLIMIT_AS, &lim);
                let zero = libc::rlimit { rlim_cur: 0, rlim_max: 0 };
                libc::setrlimit(libc::RLIMIT_CORE, &zero);
                if isolate {
                    // Best effort: unprivileged containers usually refuse this.
                    libc::unshare(libc::CLONE_NEWNET);
                }
                Ok(())
            });
        }
        let mut child = cmd.spawn().map_err(|e| format!("cannot start interpreter: {e}"))?;
        let pid = child.id() as libc::pid_t;
        let out = child.stdout.take().map(capture);
        let err = child.stderr.take().map(capture);

        let wall = Duration::from_millis(self.config.limits.wall_ms);
        let (status, timed_out) = match child.wait_timeout(wall).map_err(|e| e.to_string())? {
            Some(s) => (s, false),
            None => {
                // SAFETY: plain syscall; the group was created in pre_exec.
                unsafe { libc::kill(-pid, libc::SIGKILL) };
                (child.wait().map_err(|e| e.to_string())?, true)
            }
        };
        // Kill stragglers that kept the pipes open.
        unsafe { libc::kill(-pid, libc::SIGKILL) };
        let join = |h: Option<thread::JoinHandle<String>>| h.and_then(|h| h.join().ok()).unwrap_or_default();
        Ok(SandboxResult {
            stdout: join(out),
            stderr: join(err),
            exit_status: status.code().unwrap_or(-1),
            timed_out,
        })
    }
}

fn capture<R: Read + Send + 'static>(mut r: R) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        let mut chunk = [0u8; 8192];
        while let Ok(n) = r.read(&mut chunk) {
            if n == 0 {
                break;
            }
            if buf.len() < MAX_CAPTURE {
                buf.extend_from_slice(&chunk[..n.min(MAX_CAPTURE - buf.len())]);
            }
        }
        String::from_utf8_lossy(&buf).into_owned()
    })
}

impl ProgramExecutor for Sandbox {
    fn execute(&self, code: &str) -> SandboxResult {
        self.acquire();
        let result = self.run(code);
        self.release();
        result.unwrap_or_else(|e| SandboxResult {
            stdout: String::new(),
            exit_status: -1,
            timed_out: false,
            stderr: e,
        })
    }
}
