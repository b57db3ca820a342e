// SPDX-License-Identifier: Apache-2.0

//! Launch contract for app processes.
//!
//! Secrets reach the app only through the environment:
//! `PH_JOB_ID`, `PH_TOKEN`, `PH_APP_API` and `PH_SLIDE_API`.

use std::path::Path;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

pub const ENV_JOB_ID: &str = "PH_JOB_ID";
pub const ENV_TOKEN: &str = "PH_TOKEN";
pub const ENV_APP_API: &str = "PH_APP_API";
pub const ENV_SLIDE_API: &str = "PH_SLIDE_API";
pub const DEFAULT_CONTAINER_RUNTIME: &str = "docker";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adapter {
    /// Plain OS process.
    #[default]
    Process,
    /// `<runtime> run` of an image, same environment contract.
    Container,
    /// Nothing is launched; the job is marked running and the caller drives
    /// the app (useful while developing an app against a live platform).
    External,
}

/// How to launch an app. Read from a bundle's `run.toml`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutorSpec {
    #[serde(default)]
    pub command: String,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default)]
    pub adapter: Adapter,
    /// Wall-clock limit; the platform default applies when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_s: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime: Option<String>,
}

impl ExecutorSpec {
    pub fn process(command: impl Into<String>, args: &[&str]) -> Self {
        ExecutorSpec {
            command: command.into(),
            args: args.iter().map(|s| s.to_string()).collect(),
            adapter: Adapter::Process,
            timeout_s: None,
            image: None,
            runtime: None,
        }
    }

    pub fn external() -> Self {
        ExecutorSpec { adapter: Adapter::External, ..ExecutorSpec::process("", &[]) }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self.adapter {
            Adapter::Process if self.command.trim().is_empty() => return Err("process adapter needs a command".into()),
            Adapter::Container if self.image.as_deref().is_none_or(|i| i.trim().is_empty()) => {
                return Err("container adapter needs an image".into())
            }
            _ => {}
        }
        if self.timeout_s == Some(0) {
            return Err("timeout_s must be positive".into());
        }
        if std::iter::once(&self.command).chain(&self.args).any(|a| a.contains("pht_")) {
            return Err("launch template must not contain token secrets".into());
        }
        Ok(())
    }
}

/// Values handed to one launched app.
#[derive(Debug, Clone)]
pub struct LaunchEnv {
    pub job_id: String,
    pub token: String,
    pub app_api: String,
    pub slide_api: String,
}

impl LaunchEnv {
    fn pairs(&self) -> [(&'static str, &str); 4] {
        [
            (ENV_JOB_ID, &self.job_id),
            (ENV_TOKEN, &self.token),
            (ENV_APP_API, &self.app_api),
            (ENV_SLIDE_API, &self.slide_api),
        ]
    }
}

/// Builds the command for `spec`; `None` for the external adapter.
pub fn build_command(spec: &ExecutorSpec, env: &LaunchEnv, workdir: &Path, log: Option<std::fs::File>) -> Option<Command> {
    let mut cmd = match spec.adapter {
        Adapter::External => return None,
        Adapter::Process => {
            let mut c = Command::new(&spec.command);
            c.args(&spec.args);
            c
        }
        Adapter::Container => {
            let mut c = Command::new(spec.runtime.as_deref().unwrap_or(DEFAULT_CONTAINER_RUNTIME));
            c.args(["run", "--rm", "--network=host"]);
            // "-e NAME" copies the value from our environment, keeping it
            // out of the argument list.
            for (k, _) in env.pairs() {
                c.args(["-e", k]);
            }
            c.arg(spec.image.as_deref().unwrap_or_default());
            if !spec.command.is_empty() {
                c.arg(&spec.command);
            }
            c.args(&spec.args);
            c
        }
    };
    cmd.envs(env.pairs()).current_dir(workdir).stdin(Stdio::null());
    match log {
        Some(f) => {
            let err = f.try_clone().map(Stdio::from).unwrap_or_else(|_| Stdio::null());
            cmd.stdout(Stdio::from(f)).stderr(err);
        }
        None => {
            cmd.stdout(Stdio::null()).stderr(Stdio::null());
        }
    }
    Some(cmd)
}
