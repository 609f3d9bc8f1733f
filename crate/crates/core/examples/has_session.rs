//! Adaptive streaming over a constant link at several capacities, comparing
//! the plain throughput rule with its stall-prevention variant.

use rlcsim::runner::simulate;
use rlcsim::scenario::Scenario;

fn main() -> anyhow::Result<()> {
    println!("{:>8} {:<9} {:>6} {:>9} {:>8} {:>9}", "Mb/s", "abr", "vmaf", "level", "rd_s", "switches");
    for cap in [3.0, 10.0, 40.0, 100.0] {
        for abr in ["con", "con_plus"] {
            let s = Scenario::from_toml_str(&format!(
                "name = \"has\"\nhorizon_s = 120\nnum_flows = 1\n[channel]\nkind = \"constant\"\ncapacity_mbps = {cap}\n[flow]\ncc = \"cubic\"\napp = {{ kind = \"has\", abr = {{ kind = \"{abr}\" }} }}\n"
            ))?;
            let out = simulate(&s)?;
            let q = &out.results.sessions[0].qoe;
            println!(
                "{cap:>8} {abr:<9} {:>6.1} {:>9.2} {:>8.2} {:>9}",
                q.mean_vmaf, q.mean_level, q.rebuffer_duration_s, q.level_switch_count
            );
        }
    }
    Ok(())
}
