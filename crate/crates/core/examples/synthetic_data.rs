//! Generates the procedural pattern dataset, writes it as binary records and
//! as a PNG class directory, and reads both back.
//!
//! ```text
//! cargo run --release -p vtcc --example synthetic_data -- [out_dir]
//! ```

use std::path::PathBuf;

use vtcc::data::{generate_synthetic, write_image_dir, Dataset, DatasetKind, Pattern, SyntheticSpec};

fn main() -> Result<(), vtcc::VtccError> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("vtcc_synthetic"));
    std::fs::create_dir_all(&out).map_err(|e| vtcc::VtccError::io(&out, e))?;

    let spec = SyntheticSpec::new(4, 128, 32, 7);
    let data = generate_synthetic(&spec)?;
    for class in 0..spec.classes {
        let members: Vec<usize> = (0..data.len()).filter(|&i| data.labels()[i] == Some(class as u16)).collect();
        let mean: f64 = members.iter().map(|&i| data.image(i).mean()).sum::<f64>() / members.len() as f64;
        println!(
            "class {class}: {:?}, {} samples, base period {:.1}px, mean intensity {mean:.3}",
            Pattern::for_class(class),
            members.len(),
            spec.base_period(class)
        );
    }

    let bin = out.join("synthetic.bin");
    data.write(&bin)?;
    let back = Dataset::load(&bin, DatasetKind::BinaryRecords)?;
    println!("binary records: {} bytes, round trip equal: {}", data.to_bytes().len(), back == data);

    let dir = out.join("png");
    write_image_dir(&data, &dir)?;
    let from_dir = Dataset::load(&dir, DatasetKind::ImageDir)?;
    // the directory reader orders by class folder, then file name
    let counts = |d: &Dataset| {
        let mut c = vec![0usize; spec.classes];
        d.labels().iter().flatten().for_each(|&l| c[l as usize] += 1);
        c
    };
    println!("png directory: {} images, per-class counts {:?}", from_dir.len(), counts(&from_dir));
    assert_eq!(counts(&from_dir), counts(&data));
    Ok(())
}
