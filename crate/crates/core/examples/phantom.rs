//! Generate a labelled phantom cohort, write it to disk, and read it back.
//!
//! cargo run --example phantom -- /tmp/phantom 42

use dfup::dataset::{generate_phantom, read_dataset, write_dataset, PhantomSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "phantom".into());
    let seed: u64 = args.next().map_or(Ok(0), |s| s.parse())?;

    let spec = PhantomSpec {
        n_patients: 24,
        dims: [64, 64, 8],
        lesion_radius_range: (8.0, 14.0),
        ..PhantomSpec::default()
    };
    let cohort = generate_phantom(&spec, seed)?;
    write_dataset(&cohort, out.as_ref())?;
    let back = read_dataset(out.as_ref())?;
    assert_eq!(back, cohort);

    for (seqs, ann) in back.iter().take(5) {
        let (z, b) = ann.boxes.iter().max_by_key(|(_, b)| b.area()).unwrap();
        println!(
            "{} label={} spacing={:.3} mm, lesion slices {}..={}, largest box {}x{} on slice {z}",
            seqs.patient_id,
            ann.label,
            seqs.spacing_xy[0],
            ann.slice_range.0,
            ann.slice_range.1,
            b.x_max - b.x_min,
            b.y_max - b.y_min,
        );
    }
    let positives = back.iter().filter(|(_, a)| a.label).count();
    println!("{} patients ({positives} upstaged) written to {out}", back.len());
    Ok(())
}
