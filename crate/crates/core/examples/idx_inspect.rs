//! Parse an IDX image/label pair and print a few digits as ASCII art.
//!
//! cargo run --example idx_inspect -- [data_dir] [count]

use entroreg::data::{load_idx_images, load_idx_labels, resolve_data_dir, TEST_IMAGES, TEST_LABELS};

fn main() -> entroreg::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = resolve_data_dir(args.next().as_deref().map(std::path::Path::new))?;
    let count: usize = args.next().map_or(3, |s| s.parse().expect("count"));

    let images = load_idx_images(dir.join(TEST_IMAGES))?;
    let labels = load_idx_labels(dir.join(TEST_LABELS))?;
    println!("{} images of {}x{}, {} labels", images.count, images.rows, images.cols, labels.len());

    let mut histogram = [0usize; 10];
    for &l in &labels {
        histogram[l as usize] += 1;
    }
    println!("label counts: {histogram:?}");

    for (k, label) in labels.iter().enumerate().take(count.min(images.count)) {
        println!("\n#{k} label {label}");
        for r in images.image(k).chunks(images.cols) {
            let line: String = r
                .iter()
                .map(|&p| match p {
                    0..=63 => ' ',
                    64..=127 => '.',
                    128..=191 => 'o',
                    _ => '@',
                })
                .collect();
            println!("{line}");
        }
    }
    Ok(())
}
