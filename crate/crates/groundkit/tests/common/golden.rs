// Transcribed by hand; "{}" is the label slot.
pub const GOLDEN_P1_INSTRUCTIONS: &[&str] = &[
    "Please segment the {} in the image.",
    "Can you identify and segment the distinct {} elements within the image?",
    "I need the {} in the image to be categorized into individual segments.",
    "Could you analyze the image and segment the {} into separate segments?",
    "Can you perform an image segmentation to extract the {}?",
    "Segment the {} in the given image for analysis.",
    "Segment and highlight the {} in the image.",
    "Cut out the {} from the image and display it.",
    "Segment the {} regions in the medical image.",
];
pub const GOLDEN_P1_SINGLE: &[&str] = &[
    "The image includes {}. The segmentation result is shown in the image.",
    "The segmentation result is displayed in the image, which includes {}.",
    "You can see the segmentation result in the image, along with {}.",
    "The image shows the segmentation result, which includes {}.",
    "The segmentation result in the image includes {}.",
    "Within the image, {} is present, and the segmentation result is visible.",
];
pub const GOLDEN_P1_MULTI: &[&str] = &[
    "The image includes {}. The segmentation results are shown in the image.",
    "The segmentation results are displayed in the image, which include {}.",
    "You can see the segmentation results in the image, along with {}.",
    "The image shows the segmentation results, which include {}.",
    "The segmentation results in the image include {}.",
    "Within the image, {} are present, and the segmentation results are visible.",
];
pub const GOLDEN_BOX_INSTRUCTIONS: &[&str] = &[
    "Please segment out the organs or lesions in the bounding box.",
    "Please identify and segment the organs or lesions within the given bounding box.",
    "Segment the organs or lesions that are located inside the bounding box.",
    "Can you segment out the organs or lesions found in the specified bounding box?",
    "Please perform segmentation of the organs or lesions within this bounding box.",
    "Segment any organs or lesions present within the provided bounding box.",
    "Conduct segmentation of organs or lesions contained in the bounding box.",
    "Could you segment the organs or lesions that are inside the bounding box?",
];
pub const GOLDEN_POINT_INSTRUCTIONS: &[&str] = &[
    "Please segment out the organs or lesions at the specified point.",
    "Please identify and segment the organs or lesions at the given point.",
    "Segment the organs or lesions that are located at the specified point.",
    "Can you segment out the organs or lesions found at the specified point?",
    "Please perform segmentation of the organs or lesions at this point.",
    "Segment any organs or lesions present at the provided point.",
    "Conduct segmentation of organs or lesions at the specified point.",
    "Could you segment the organs or lesions at the specified point?",
];
pub const GOLDEN_P2_RESPONSES: &[&str] = &[
    "The result of segmentation is {} and is shown in the image.",
    "The outcome of the segmentation is {} and is displayed in the image.",
    "The segmentation result is {} and is shown in the image.",
    "The organs or lesions have been segmented and the result is {}.",
    "The segmentation output is {} and is present in the image.",
    "Segmentation results in {}, which is shown in the image.",
];
