//! How large can a governor droop be before the bus stops being passive?

use freqctl::analysis::certify_tg_storage;
use freqctl::passivity::{isp_margin, max_gain_ratio, tg_min_real, FrequencyGrid, TransferFunction};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("{:>8} {:>12} {:>10}", "a", "max K/D", "w_min");
    for a in [0.01, 0.1, 0.5, 1.0, 2.0, 10.0, 100.0] {
        let (_, w) = tg_min_real(1.0, a)?;
        println!("{a:>8} {:>12.4} {w:>10.4}", max_gain_ratio(a));
    }

    let (tau_g, tau_b, d) = (0.5, 0.5, 1.0);
    println!("\nK/D    scanned margin   storage");
    for ratio in [2.0, 6.0, 7.9, 8.1] {
        let tf = TransferFunction::turbine_governor(tau_g, tau_b).scaled(ratio * d).with_feedthrough(d);
        let r = isp_margin(&tf, FrequencyGrid::default())?;
        let storage = certify_tg_storage(tau_g, tau_b, &[ratio * d], d)
            .map(|s| format!("{:?}, margin {:.2e}", s.source, s.margin))
            .unwrap_or_else(|| "none".into());
        println!("{ratio:<6} {:>+14.5}   {storage}", r.margin);
    }
    Ok(())
}
