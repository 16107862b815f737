fn main() {
    use subnet_core::image::Image;
    use subnet_core::phash::*;
    use rand::Rng;
    let mut rng = subnet_core::rng::stream(8, &[subnet_core::rng::salt::DATA]);
    let img = Image::new(40, 30, 1, (0..40*30).map(|_| rng.gen::<u8>()).collect()).unwrap();
    println!("average    {}", average_hash(&img).to_hex());
    println!("difference {}", difference_hash(&img).to_hex());
    println!("perceptual {}", perceptual_hash(&img).to_hex());
    println!("wavelet    {}", wavelet_hash(&img).to_hex());
    println!("color      {}", color_hash(&img).to_hex());
}
