pub mod evaluate;
pub mod fit;
pub mod fuse;
pub mod gradcheck;
pub mod simulate;
pub mod toy;
