//! Subprocess execution shared by external operators and detectors.

use std::io::Read;
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Command, ExitStatus, Stdio};
use std::time::Duration;

use thiserror::Error;
use wait_timeout::ChildExt;

#[derive(Debug, Error)]
pub enum ProcessError {
    #[error("failed to spawn `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("`{command}` timed out after {} s", .timeout.as_secs_f64())]
    Timeout { command: String, timeout: Duration, stderr: String },
}

#[derive(Debug)]
pub struct CommandOutput {
    pub command: String,
    pub status: ExitStatus,
    pub stdout: Vec<u8>,
    pub stderr: String,
}

impl CommandOutput {
    pub fn success(&self) -> bool {
        self.status.success()
    }

    /// Exit code, or `None` if the process was killed by a signal.
    pub fn code(&self) -> Option<i32> {
        self.status.code()
    }

    /// `sh` reports a command it cannot find with 127.
    pub fn command_not_found(&self) -> bool {
        self.code() == Some(127)
    }

    /// Tail of stderr, falling back to stdout when stderr is empty.
    pub fn diagnostics(&self) -> String {
        if self.stderr.trim().is_empty() {
            tail(&String::from_utf8_lossy(&self.stdout))
        } else {
            tail(&self.stderr)
        }
    }

    /// What the run log keeps: stderr for successful runs, diagnostics otherwise.
    pub fn log_text(&self) -> String {
        if self.success() {
            tail(&self.stderr)
        } else {
            self.diagnostics()
        }
    }
}

fn tail(s: &str) -> String {
    let s = s.trim();
    let start = s.char_indices().rev().nth(2000).map_or(0, |(i, _)| i);
    s[start..].to_string()
}

/// Runs `command` through `sh -c` in its own process group, capturing both
/// streams. The whole group is killed when `timeout` elapses.
pub fn run_shell(command: &str, timeout: Duration, cwd: Option<&Path>) -> Result<CommandOutput, ProcessError> {
    let mut cmd = Command::new("sh");
    cmd.arg("-c")
        .arg(command)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);
    if let Some(dir) = cwd {
        cmd.current_dir(dir);
    }
    let mut child = cmd.spawn().map_err(|source| ProcessError::Spawn { command: command.into(), source })?;

    let mut stdout = child.stdout.take().expect("piped stdout");
    let mut stderr = child.stderr.take().expect("piped stderr");
    let out_reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stdout.read_to_end(&mut buf);
        buf
    });
    let err_reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stderr.read_to_end(&mut buf);
        buf
    });

    let status = match child.wait_timeout(timeout) {
        Ok(Some(status)) => status,
        Ok(None) | Err(_) => {
            kill_group(child.id());
            let _ = child.wait();
            let stderr = String::from_utf8_lossy(&err_reader.join().unwrap_or_default()).into_owned();
            let _ = out_reader.join();
            return Err(ProcessError::Timeout { command: command.into(), timeout, stderr });
        }
    };
    // Descendants may still hold the pipes; reap the group before draining.
    kill_group(child.id());
    Ok(CommandOutput {
        command: command.into(),
        status,
        stdout: out_reader.join().unwrap_or_default(),
        stderr: String::from_utf8_lossy(&err_reader.join().unwrap_or_default()).into_owned(),
    })
}

fn kill_group(pid: u32) {
    // SAFETY: signalling a process group we created; failure (already gone) is harmless.
    unsafe {
        libc::kill(-(pid as libc::pid_t), libc::SIGKILL);
    }
}

/// Single-quotes `s` for `sh`.
pub fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

pub fn count_placeholder(template: &str, name: &str) -> usize {
    template.matches(&format!("{{{name}}}")).count()
}

/// Substitutes `{name}` placeholders. Unknown braces are left for the shell.
pub fn fill_template(template: &str, values: &[(&str, String)]) -> String {
    let mut out = template.to_string();
    for (name, value) in values {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn captures_streams_and_status() {
        let out = run_shell("echo hi; echo oops >&2; exit 3", Duration::from_secs(10), None).unwrap();
        assert_eq!(out.stdout, b"hi\n");
        assert_eq!(out.stderr, "oops\n");
        assert_eq!(out.code(), Some(3));
        assert_eq!(out.diagnostics(), "oops");
    }

    #[test]
    fn times_out() {
        let start = std::time::Instant::now();
        let err = run_shell("sleep 30", Duration::from_millis(200), None).unwrap_err();
        assert!(matches!(err, ProcessError::Timeout { .. }));
        assert!(start.elapsed() < Duration::from_secs(10));
    }

    #[test]
    fn missing_command_is_127() {
        let out = run_shell("definitely-not-a-real-tool-xyz", Duration::from_secs(10), None).unwrap();
        assert!(out.command_not_found());
    }

    #[test]
    fn quoting_survives_the_shell() {
        let tricky = "it's a $path with spaces";
        let out = run_shell(&format!("printf %s {}", shell_quote(tricky)), Duration::from_secs(10), None).unwrap();
        assert_eq!(String::from_utf8(out.stdout).unwrap(), tricky);
    }

    #[test]
    fn template_filling() {
        let t = "cp {in_dir}/* {out_dir} # {keep}";
        assert_eq!(count_placeholder(t, "in_dir"), 1);
        let filled = fill_template(t, &[("in_dir", "/a".into()), ("out_dir", "/b".into())]);
        assert_eq!(filled, "cp /a/* /b # {keep}");
    }
}
