//! COP-k-means on a toy set where plain k-means breaks a cannot-link.

use diarstitch::clustering::kmeans::{cop_kmeans_fit, kmeans_fit};
use diarstitch::clustering::CannotLinks;
use ndarray::array;

fn main() -> diarstitch::Result<()> {
    let points = array![[0.0, 0.0], [0.2, 0.0], [5.0, 5.0], [5.1, 5.2], [0.1, 0.1]];
    // points 0 and 1 came out of the same block
    let links = CannotLinks::from_pairs(5, &[(0, 1)])?;

    let plain = kmeans_fit(points.view(), 2, 0, 100)?;
    let cop = cop_kmeans_fit(points.view(), 2, &links, 0, 100, 20)?;
    println!("kmeans     {:?}", plain.labels);
    println!("cop-kmeans {:?}", cop.labels);

    let impossible = CannotLinks::from_pairs(3, &[(0, 1), (1, 2), (0, 2)])?;
    match cop_kmeans_fit(points.slice(ndarray::s![..3, ..]), 2, &impossible, 0, 100, 20) {
        Ok(_) => println!("unexpected success"),
        Err(e) => println!("three mutually linked points, k = 2: {e}"),
    }
    Ok(())
}
