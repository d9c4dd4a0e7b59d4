//! Synthetic scenes: rendered images paired with CSI from a geometric channel.

mod channel;
mod dataset;
mod render;

pub use channel::{static_channel, synth_channel, ChannelParams, PathParams};
pub use dataset::{
    class_separation, gen_dataset, gen_split, make_sample, sample_rng, ClassDistance, ClassSeparation,
    Dataset, DatasetManifest, Sample, Scenario, SimConfig, Split, DATASET_MAGIC, MANIFEST_FILE,
};
pub use render::{
    render_scene, walk_center_x, Image, Occupancy, PixelBox, Scene, BACKGROUND, IMAGE_BYTES, IMAGE_SIDE,
    MAX_JITTER, MAX_USERS, PERSON, PERSON_HEIGHT, PERSON_TOP, PERSON_WIDTH, SLOT_CENTERS, WALK_LABEL,
};
