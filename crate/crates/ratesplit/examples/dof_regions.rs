//! Closed-form high-SNR slopes: sum DoF against the channel-knowledge
//! exponent, the two-user DoF polygons behind the sums, and the two-cell
//! counterparts.

use ratesplit::dof::{dof_region_two_user, rs_sum_dof, two_cell_dof, zf_sum_dof, Strategy};

fn main() {
    println!("two-user sum DoF");
    println!("alpha     rs   zfbf");
    for alpha in [0.0, 0.2, 0.4, 0.6, 0.8, 1.0] {
        println!("{alpha:>5.1} {:>6.2} {:>6.2}", rs_sum_dof(2, alpha), zf_sum_dof(2, alpha));
    }

    println!();
    println!("two-user DoF polygons at alpha = 0.6");
    for strategy in Strategy::ALL {
        let region = dof_region_two_user(strategy, 0.6);
        let corners: Vec<String> =
            region.vertices.iter().map(|(d1, d2)| format!("({d1:.1}, {d2:.1})")).collect();
        println!("{:>5}: {}", strategy.name(), corners.join(" "));
    }

    println!();
    println!("two-cell sum DoF");
    println!("alpha     rs    zf");
    for alpha in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let dof = two_cell_dof(alpha);
        println!("{alpha:>5.2} {:>6.2} {:>6.2}", dof.rs, dof.zf);
    }
}
