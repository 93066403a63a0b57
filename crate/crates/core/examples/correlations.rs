//! Pearson, Spearman and Kendall tau-b, including tied and degenerate data.

use rairl::evaluation::{average_ranks, correlations, kendall, pearson};

fn main() -> rairl::Result<()> {
    let x = [1.0, 2.0, 3.0, 4.0, 5.0];
    let cases: [(&str, [f64; 5]); 4] = [
        ("linear", [2.0, 4.0, 6.0, 8.0, 10.0]),
        ("monotone", [1.0, 8.0, 27.0, 64.0, 125.0]),
        ("one swap", [1.0, 3.0, 2.0, 4.0, 5.0]),
        ("ties", [1.0, 1.0, 2.0, 2.0, 3.0]),
    ];
    println!("{:<10} {:>8} {:>8} {:>8}", "y", "pearson", "spearman", "kendall");
    for (name, y) in cases {
        let c = correlations(&x, &y)?;
        println!("{name:<10} {:>8.4} {:>8.4} {:>8.4}", c.pearson, c.spearman, c.kendall);
    }
    println!("average ranks of [10, 20, 10, 30]: {:?}", average_ranks(&[10.0, 20.0, 10.0, 30.0]));
    println!("kendall of [1,2,3,4] vs [1,3,2,4]: {:.4}", kendall(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0])?);
    match pearson(&x, &[3.0; 5]) {
        Err(e) => println!("constant input: {e}"),
        Ok(r) => println!("constant input gave {r}"),
    }
    Ok(())
}
