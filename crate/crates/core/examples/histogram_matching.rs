//! Feature-graph rating benchmark at reduced scale: a band-limited matrix
//! remapped onto the MovieLens rating histogram.

use sgmc::metrics::effective_rank;
use sgmc::synthdata::{histogram_levels, histogram_match, project_bandlimit, value_histogram, FeatureRatingBenchmark, ML100K_HISTOGRAM};

fn main() -> sgmc::Result<()> {
    let bench = FeatureRatingBenchmark {
        rows: 120,
        cols: 160,
        projection_rank: 10,
        observed: 3000,
        ..Default::default()
    };
    let reference = histogram_levels(&ML100K_HISTOGRAM);
    let data = bench.generate(&reference, 4)?;
    println!("histogram of the ratings: {:?}", value_histogram(&data.truth.view()));
    println!("effective rank after matching: {:.1}", effective_rank(&data.truth.view())?);
    println!("observed train {} / test {}", data.train.count(), data.test.count());

    // Matching breaks band-limitedness: projecting back recovers a low rank.
    let smooth = project_bandlimit(&data.truth.view(), &data.row_spectrum, &data.col_spectrum, 10)?;
    println!("effective rank of the band-limited projection: {:.1}", effective_rank(&smooth.view())?);
    let rematched = histogram_match(&smooth.view(), &reference)?;
    println!("rematched histogram: {:?}", value_histogram(&rematched.view()));
    Ok(())
}
