//! Builds a LoS/NLoS capacity trace, prints it as CSV, then pushes packets
//! through it to show serialization, HARQ delay and residual loss.

use rlcsim::channel::{synth_los_nlos, transmit, write_trace, DeliveryOutcome, LosNlosParams};
use rlcsim::sim::{RandomStream, SimTime, StreamKind};

fn main() -> anyhow::Result<()> {
    let trace = synth_los_nlos(&LosNlosParams {
        los_capacity_bps: 500_000_000,
        nlos_capacity_bps: 100_000_000,
        los_duration_s: 2.0,
        nlos_duration_s: 1.0,
        los_loss_prob: 0.0,
        nlos_loss_prob: 0.3,
        base_owd_us: 4_000,
        total_duration_s: 6.0,
        max_harq_retx: 2,
        harq_retx_delay_us: 1_000,
    })?;
    write_trace(&trace, std::io::stdout())?;

    let mut rng = RandomStream::new(1, StreamKind::MacLoss, 0);
    for start_s in [0.5, 2.5] {
        let mut now = SimTime::from_secs_f64(start_s);
        let (mut lost, mut delay_sum, n) = (0, 0.0, 10_000);
        for _ in 0..n {
            let tx = transmit(1200, now, &trace, &mut rng).expect("capacity never zero here");
            match tx.outcome {
                DeliveryOutcome::Delivered { at } => delay_sum += (at - now).as_millis_f64(),
                DeliveryOutcome::Lost => lost += 1,
            }
            now = tx.link_free_at;
        }
        println!(
            "from {start_s} s: {n} packets, {lost} lost, mean one-way {:.3} ms",
            delay_sum / (n - lost) as f64
        );
    }
    Ok(())
}
