from affectfusion.data.align import align_track, clamp_labels, nearest_indices
from affectfusion.data.io import (
    read_annotation_track,
    read_descriptor_file,
    read_feature_track,
    read_frame_list,
    read_json,
    read_landmarks,
    read_pgm,
    write_annotation_track,
    write_descriptor_file,
    write_feature_track,
    write_json,
    write_pgm,
)
from affectfusion.data.manifest import PARTITIONS, load_manifest
from affectfusion.data.types import (
    AnnotationTrack,
    CorpusManifest,
    DescriptorSet,
    FeatureTrack,
    GrayImage,
    LandmarkFrame,
    PredictionTrack,
    SubjectEntry,
)
