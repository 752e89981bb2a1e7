#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn aircatch<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_aircatch")).args(args).env("AIRCATCH_LOG", "warn").output().expect("spawn aircatch")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// One static tag advertising every 2 s for 100 s without jitter.
pub const ONE_DEVICE: &str = r#"
name = "one"
duration_s = 100
seed = 5
jitter = 0

[[device]]
name = "tag"
ecosystem = "tile"
cfo_hz = 12000
adv_interval_s = 2
"#;

/// Short physical capture of two devices.
pub const TWO_DEVICES: &str = r#"
name = "two"
duration_s = 40
seed = 9

[[device]]
name = "tag"
ecosystem = "tile"
cfo_hz = 12000
transition_bias_hz = { "10" = 2000, "01" = -1500 }

[[device]]
name = "phone"
ecosystem = "google"
cfo_hz = -31000
adv_interval_s = 4
"#;

/// Five static Apple-family tags, spread in CFO, for 80 minutes.
pub const COMMUTE: &str = r#"
name = "commute"
duration_s = 4800
seed = 21

[[device]]
name = "a"
ecosystem = "apple"
cfo_hz = -40000
transition_bias_hz = { "00" = 300, "11" = -200, "10" = 5200, "01" = -4100 }

[[device]]
name = "b"
ecosystem = "apple"
cfo_hz = -18000
transition_bias_hz = { "00" = -600, "11" = 400, "10" = -3900, "01" = 6100 }

[[device]]
name = "c"
ecosystem = "apple"
cfo_hz = 3000
transition_bias_hz = { "00" = 100, "11" = 700, "10" = 7300, "01" = 2500 }

[[device]]
name = "d"
ecosystem = "apple"
cfo_hz = 36000
transition_bias_hz = { "00" = -200, "11" = -500, "10" = -6400, "01" = -5200 }

[[device]]
name = "keys"
ecosystem = "tile"
cfo_hz = 21000
"#;

pub const INJECT: &str = r#"
scenario = "commute.toml"

[[adversary]]
cfo_hz = 18000
t_tx_s = 2
transition_bias_hz = { "00" = 400, "11" = -300, "10" = 4200, "01" = -3800 }
"#;

/// Commute analogue cut to 40 minutes for sweeps.
pub const SHORT_COMMUTE: &str = r#"
name = "short"
duration_s = 2400
seed = 4

[[device]]
name = "a"
ecosystem = "apple"
cfo_hz = -40000
transition_bias_hz = { "00" = 300, "11" = -200, "10" = 5200, "01" = -4100 }

[[device]]
name = "b"
ecosystem = "apple"
cfo_hz = 30000
transition_bias_hz = { "00" = -600, "11" = 400, "10" = -3900, "01" = 6100 }
"#;

pub const SWEEP: &str = r#"
scenarios = ["short.toml"]
benign_scenarios = ["short.toml"]
t_tx_grid = [10, 30]
max_adversaries = 4
thresholds = [0.9, 1.45]
seed = 3

[detector]
block_s = 600
t_min_s = 600

[[adversary]]
t_tx_s = 10
cfo_hz = 11800
transition_bias_hz = { "00" = 300, "11" = -400, "10" = 4200, "01" = -3800 }

[[adversary]]
t_tx_s = 10
cfo_hz = -8600
transition_bias_hz = { "00" = -700, "11" = 500, "10" = -2600, "01" = 3100 }

[[adversary]]
t_tx_s = 10
cfo_hz = 2400
transition_bias_hz = { "00" = 200, "11" = 100, "10" = 3500, "01" = 2900 }

[[adversary]]
t_tx_s = 10
cfo_hz = -23900
transition_bias_hz = { "00" = 600, "11" = -300, "10" = -4000, "01" = -2100 }
"#;

pub fn data_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().skip(1).map(str::to_string).collect()
}
