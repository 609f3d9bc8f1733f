//! One bulk flow per congestion controller over the same 100 Mb/s link with
//! a 1 MB drop-tail buffer.

use rlcsim::runner::simulate;
use rlcsim::scenario::Scenario;

fn main() -> anyhow::Result<()> {
    for cc in ["reno", "cubic", "bbr", "dctcp"] {
        // DCTCP only differs from Reno when the queue marks.
        let ecn = if cc == "dctcp" { "ecn = true\n[flow.queue]\naqm = \"l4s\"\nmode = \"mark\"" } else { "" };
        let s = Scenario::from_toml_str(&format!(
            r#"
name = "cc-{cc}"
horizon_s = 20
num_flows = 1
[channel]
kind = "constant"
capacity_mbps = 100
[queue]
buffer_bytes = 1000000
[flow]
cc = "{cc}"
app = {{ kind = "bulk" }}
{ecn}
"#
        ))?;
        let out = simulate(&s)?;
        let f = &out.results.flows[0];
        let srtt = f.srtt_us.as_ref().map_or(f64::NAN, |d| d.mean / 1e3);
        println!(
            "{cc:<6} goodput {:6.2} Mb/s  mean sRTT {srtt:7.2} ms  drops {:4}  retx {:4}  rtos {}",
            f.goodput_bps / 1e6,
            f.drops.overflow,
            f.retransmissions,
            f.rtos
        );
    }
    Ok(())
}
