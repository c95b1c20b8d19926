//! Shared benchmark scenes.

use spinebox_core::synthgen::{generate, ShelfSpec, SyntheticShelf};

/// A 1108x1478 shelf of ten books with four text bands each (40 raw boxes).
pub fn phone_photo_spec(seed: u64) -> ShelfSpec {
    ShelfSpec {
        seed,
        canvas_width: 1108,
        canvas_height: 1478,
        books: 10,
        angle_range: [89.0, 91.0],
        spine_width_range: [60.0, 70.0],
        spine_length_range: [700.0, 900.0],
        fragments_per_book: [4, 4],
        ..ShelfSpec::default()
    }
}

pub fn phone_photo(seed: u64) -> SyntheticShelf {
    generate(&phone_photo_spec(seed)).expect("scene fits its canvas")
}
