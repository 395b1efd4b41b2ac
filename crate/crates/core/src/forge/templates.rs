//! Instruction and response templates for the language-guided (P1) and
//! visual-prompt (P2) perspectives. `{}` marks the label slot.

pub const SLOT: &str = "{}";

pub const P1_INSTRUCTIONS: [&str; 9] = [
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

pub const P1_RESPONSES_SINGLE: [&str; 6] = [
    "The image includes {}. The segmentation result is shown in the image.",
    "The segmentation result is displayed in the image, which includes {}.",
    "You can see the segmentation result in the image, along with {}.",
    "The image shows the segmentation result, which includes {}.",
    "The segmentation result in the image includes {}.",
    "Within the image, {} is present, and the segmentation result is visible.",
];

pub const P1_RESPONSES_MULTI: [&str; 6] = [
    "The image includes {}. The segmentation results are shown in the image.",
    "The segmentation results are displayed in the image, which include {}.",
    "You can see the segmentation results in the image, along with {}.",
    "The image shows the segmentation results, which include {}.",
    "The segmentation results in the image include {}.",
    "Within the image, {} are present, and the segmentation results are visible.",
];

pub const P2_BOX_INSTRUCTIONS: [&str; 8] = [
    "Please segment out the organs or lesions in the bounding box.",
    "Please identify and segment the organs or lesions within the given bounding box.",
    "Segment the organs or lesions that are located inside the bounding box.",
    "Can you segment out the organs or lesions found in the specified bounding box?",
    "Please perform segmentation of the organs or lesions within this bounding box.",
    "Segment any organs or lesions present within the provided bounding box.",
    "Conduct segmentation of organs or lesions contained in the bounding box.",
    "Could you segment the organs or lesions that are inside the bounding box?",
];

pub const P2_BOX_RESPONSES: [&str; 6] = [
    "The result of segmentation is {} and is shown in the image.",
    "The outcome of the segmentation is {} and is displayed in the image.",
    "The segmentation result is {} and is shown in the image.",
    "The organs or lesions have been segmented and the result is {}.",
    "The segmentation output is {} and is present in the image.",
    "Segmentation results in {}, which is shown in the image.",
];

pub const P2_POINT_INSTRUCTIONS: [&str; 8] = [
    "Please segment out the organs or lesions at the specified point.",
    "Please identify and segment the organs or lesions at the given point.",
    "Segment the organs or lesions that are located at the specified point.",
    "Can you segment out the organs or lesions found at the specified point?",
    "Please perform segmentation of the organs or lesions at this point.",
    "Segment any organs or lesions present at the provided point.",
    "Conduct segmentation of organs or lesions at the specified point.",
    "Could you segment the organs or lesions at the specified point?",
];

pub const P2_POINT_RESPONSES: [&str; 6] = [
    "The result of segmentation is {} and is shown in the image.",
    "The outcome of the segmentation is {} and is displayed in the image.",
    "The segmentation result is {} and is shown in the image.",
    "The organs or lesions have been segmented and the result is {}.",
    "The segmentation output is {} and is present in the image.",
    "Segmentation results in {}, which is shown in the image.",
];

/// Splits a template at its single `{}`.
pub fn split_slot(template: &str) -> (&str, &str) {
    template.split_once(SLOT).unwrap_or((template, ""))
}

pub fn fill(template: &str, value: &str) -> alloc::string::String {
    template.replacen(SLOT, value, 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_labelled_template_has_one_slot() {
        let labelled = P1_INSTRUCTIONS
            .iter()
            .chain(&P1_RESPONSES_SINGLE)
            .chain(&P1_RESPONSES_MULTI)
            .chain(&P2_BOX_RESPONSES)
            .chain(&P2_POINT_RESPONSES);
        for t in labelled {
            assert_eq!(t.matches(SLOT).count(), 1, "{t}");
        }
        for t in P2_BOX_INSTRUCTIONS.iter().chain(&P2_POINT_INSTRUCTIONS) {
            assert!(!t.contains(SLOT));
        }
    }
}
