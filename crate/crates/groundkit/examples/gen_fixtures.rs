//! Regenerates `fixtures/`: a 50-image synthetic manifest over eight
//! modalities, a knowledge file covering every label, and canned
//! completions for a seed-0 forge run.
//!
//! cargo run -p groundkit --example gen_fixtures

use std::fs;
use std::path::{Path, PathBuf};

use groundkit::io;
use groundkit::pipeline::{forge, ForgeOptions};
use groundkit::provider::StubProvider;
use groundkit::wire::ManifestRecord;
use groundkit_core::forge::{
    CompletionProvider, CompletionRequest, ImageRecord, KnowledgeBase, KnowledgeEntry,
    KnowledgeSource, LabeledMask, Modality, ProviderError,
};
use groundkit_core::seed::derive_seed;
use groundkit_core::BinaryMask;

const IMAGES: usize = 50;
const SIZE: usize = 24;

/// (modality, [(label, knowledge text)])
const LABELS: [(Modality, &[(&str, &str)]); 8] = [
    (Modality::Ct, &[
        ("liver", "The liver is the largest solid abdominal organ, lying in the right upper quadrant; it processes nutrients, produces bile and detoxifies blood."),
        ("spleen", "The spleen sits in the left upper quadrant behind the stomach and filters aged red blood cells; enlargement follows infection or portal hypertension."),
        ("kidney", "The kidneys are paired retroperitoneal organs beside the spine that filter blood and produce urine; stones cause colicky flank pain."),
        ("pancreas", "The pancreas lies across the posterior abdomen behind the stomach and secretes digestive enzymes and insulin; inflammation causes epigastric pain radiating to the back."),
        ("gallbladder", "The gallbladder sits beneath the liver and stores bile; gallstones cause right upper quadrant pain after fatty meals."),
        ("aorta", "The aorta is the main artery leaving the heart and running down in front of the spine; an aneurysm is a dangerous dilation of its wall."),
        ("stomach", "The stomach is a muscular sac in the left upper abdomen that stores and digests food with acid; ulcers cause burning epigastric pain."),
    ]),
    (Modality::Mri, &[
        ("brain tumor", "A brain tumor is an abnormal mass of cells within the skull; it can cause headaches, seizures and focal neurological deficits."),
        ("ventricle", "The cerebral ventricles are cavities in the brain filled with cerebrospinal fluid; enlargement suggests hydrocephalus or atrophy."),
        ("hippocampus", "The hippocampus is a curved structure in the medial temporal lobe essential for memory; it shrinks early in Alzheimer disease."),
        ("prostate", "The prostate is a gland below the bladder surrounding the urethra in men; enlargement causes urinary hesitancy and frequency."),
        ("bladder", "The urinary bladder is a hollow muscular organ in the pelvis that stores urine before voiding."),
        ("femoral head", "The femoral head is the rounded top of the thigh bone that forms the hip joint; loss of blood supply leads to avascular necrosis."),
    ]),
    (Modality::Dermoscopy, &[
        ("melanoma", "Melanoma is a malignant tumour of pigment cells; asymmetry, irregular borders and colour variation are warning signs."),
        ("nevus", "A nevus is a common benign mole formed by clustered pigment cells, usually symmetric with a regular network."),
        ("seborrheic keratosis", "Seborrheic keratosis is a benign warty skin growth with a stuck-on appearance, common in older adults."),
        ("basal cell carcinoma", "Basal cell carcinoma is the most common skin cancer; it appears as a pearly lesion with arborizing vessels and rarely spreads."),
        ("vascular lesion", "A vascular skin lesion such as a haemangioma shows red to purple lacunae formed by dilated blood vessels."),
        ("dermatofibroma", "A dermatofibroma is a firm benign skin nodule, often on the legs, with a central white patch under dermoscopy."),
    ]),
    (Modality::Pet, &[
        ("lymph node", "Lymph nodes are small immune organs along lymphatic vessels; high tracer uptake suggests infection or metastatic spread."),
        ("lung nodule", "A lung nodule is a small round opacity in the lung; metabolically active nodules raise concern for cancer."),
        ("bone metastasis", "A bone metastasis is cancer spread to the skeleton; it causes bone pain and pathological fractures."),
        ("thyroid nodule", "A thyroid nodule is a lump in the thyroid gland in the neck; focal uptake warrants biopsy to exclude cancer."),
        ("myocardium", "The myocardium is the heart muscle; its glucose uptake reflects viability after a heart attack."),
        ("adrenal gland", "The adrenal glands sit on top of the kidneys and produce stress hormones; masses may secrete excess hormones."),
    ]),
    (Modality::Endoscopy, &[
        ("polyp", "A polyp is a growth protruding from the bowel lining; some adenomatous polyps progress to colorectal cancer."),
        ("ulcer", "An ulcer is a break in the mucosal lining, often caused by acid or Helicobacter pylori, and may bleed."),
        ("esophageal varices", "Esophageal varices are dilated veins in the lower oesophagus caused by portal hypertension; rupture causes severe bleeding."),
        ("colon mucosa", "The colon mucosa is the inner lining of the large bowel; inflammation makes it red, friable and ulcerated."),
        ("surgical instrument", "Surgical instruments such as graspers and snares are inserted through the endoscope to take biopsies or remove lesions."),
        ("bleeding site", "A bleeding site is an active source of haemorrhage in the gut and presents with vomiting blood or black stools."),
    ]),
    (Modality::XRay, &[
        ("pneumothorax", "A pneumothorax is air in the pleural space that collapses the lung; it causes sudden chest pain and breathlessness."),
        ("pleural effusion", "A pleural effusion is fluid between the lung and chest wall; it blunts the costophrenic angle and causes breathlessness."),
        ("heart", "The heart is the muscular pump in the middle of the chest; an enlarged silhouette suggests heart failure."),
        ("left lung", "The left lung has two lobes and sits beside the heart in the left chest; it exchanges oxygen and carbon dioxide."),
        ("right lung", "The right lung has three lobes and is slightly larger than the left; it exchanges oxygen and carbon dioxide."),
        ("rib fracture", "A rib fracture is a break in a rib, usually after trauma; it causes pain on breathing and may injure the lung."),
        ("clavicle", "The clavicle is the collarbone connecting the shoulder to the sternum; it commonly fractures after a fall."),
    ]),
    (Modality::Ultrasound, &[
        ("fetal head", "The fetal head is measured on ultrasound to estimate gestational age and fetal growth."),
        ("thyroid gland", "The thyroid gland is a butterfly-shaped gland in the front of the neck that produces hormones regulating metabolism."),
        ("breast lesion", "A breast lesion is a focal abnormality in breast tissue; irregular margins and shadowing suggest malignancy."),
        ("carotid artery", "The carotid arteries run up the neck to supply the brain; plaque narrowing them raises the risk of stroke."),
        ("endometrium", "The endometrium is the inner lining of the uterus that thickens during the menstrual cycle; abnormal thickening can signal disease."),
        ("placenta", "The placenta attaches to the uterine wall and nourishes the fetus; a low-lying placenta can cause bleeding."),
    ]),
    (Modality::Fundus, &[
        ("optic disc", "The optic disc is where the optic nerve leaves the eye; swelling suggests raised intracranial pressure."),
        ("optic cup", "The optic cup is the central depression of the optic disc; an enlarged cup-to-disc ratio indicates glaucoma."),
        ("macula", "The macula is the central retina responsible for sharp vision; its degeneration causes central vision loss."),
        ("retinal vessels", "The retinal vessels supply the inner retina; narrowing and nicking reflect hypertension."),
        ("hard exudates", "Hard exudates are yellow lipid deposits in the retina from leaky vessels, typical of diabetic retinopathy."),
        ("microaneurysm", "Microaneurysms are tiny red dots from capillary wall bulges and are the earliest sign of diabetic retinopathy."),
    ]),
];

const SOURCES: [KnowledgeSource; 3] = [
    KnowledgeSource::Wikipedia,
    KnowledgeSource::Umls,
    KnowledgeSource::Manual,
];

fn pick(seed: u64, key: &str, n: usize) -> usize {
    (derive_seed(seed, key) % n as u64) as usize
}

/// One blob per label, each inside its own vertical band.
fn image(i: usize) -> ImageRecord {
    let (modality, pool) = LABELS[i % 8];
    let seed = i as u64;
    let k = 1 + pick(seed, "count", 3.min(pool.len()));
    let first = pick(seed, "first", pool.len());
    let band = SIZE / k;
    let masks = (0..k)
        .map(|j| {
            let label = pool[(first + j) % pool.len()].0;
            let key = format!("{label}/{j}");
            let rx = 2 + pick(seed, &format!("rx/{key}"), band / 2 - 2) as i64;
            let ry = 3 + pick(seed, &format!("ry/{key}"), SIZE / 3) as i64;
            let cx = (j * band + band / 2) as i64;
            let cy = (SIZE / 2) as i64 + pick(seed, &format!("cy/{key}"), 5) as i64 - 2;
            let mask = BinaryMask::from_fn(SIZE, SIZE, |x, y| {
                let (dx, dy) = (x as i64 - cx, y as i64 - cy);
                dx * dx * ry * ry + dy * dy * rx * rx <= rx * rx * ry * ry
            })
            .expect("fixed size");
            LabeledMask {
                label: label.into(),
                mask,
            }
        })
        .collect();
    ImageRecord {
        id: format!("img_{i:03}"),
        image_ref: format!("images/img_{i:03}.png"),
        modality,
        masks,
    }
}

fn knowledge() -> KnowledgeBase {
    let entries = LABELS
        .iter()
        .flat_map(|(_, pool)| pool.iter())
        .enumerate()
        .map(|(i, (label, text))| KnowledgeEntry {
            label: (*label).into(),
            text: (*text).into(),
            source: SOURCES[i % 3],
        });
    KnowledgeBase::from_entries(entries).expect("labels are unique")
}

/// Writes a plausible completion for every prompt it sees.
struct Recorder {
    stub: StubProvider,
}

const P3_QUESTIONS: [&str; 3] = [
    "The patient describes the symptoms in the history above. Which structure in this image best explains them?",
    "Which finding in this scan accounts for the clinical picture, and why?",
    "Based on the image, what is the most likely source of the patient's complaint?",
];

const P4_QUESTIONS: [&str; 3] = [
    "What is shown in the marked region, and what is its clinical significance?",
    "What does the marked area correspond to, and what does it do?",
    "Describe the structure inside the marked region.",
];

impl CompletionProvider for Recorder {
    fn complete(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
        let labels: Vec<&str> = req
            .prompt
            .lines()
            .find_map(|l| {
                l.strip_prefix("Entities in the image: ")
                    .or_else(|| l.strip_prefix("Entity in the image: "))
            })
            .expect("prompt lists its entities")
            .split(", ")
            .collect();
        let seed = derive_seed(0, &req.prompt);
        let marked = req.prompt.contains("marked in the image");
        let question = if marked {
            P4_QUESTIONS[(seed % 3) as usize]
        } else {
            P3_QUESTIONS[(seed % 3) as usize]
        };
        let mut answer = String::new();
        for (i, l) in labels.iter().enumerate() {
            if i > 0 {
                answer.push(' ');
            }
            answer.push_str(&match (i, marked) {
                (0, true) => {
                    format!("The marked region shows the {l}, which is clearly visible here.")
                }
                (0, false) => {
                    format!("The {l} is the most likely explanation, as it appears in the image.")
                }
                _ => format!("Next to it lies the {l}, which should be assessed together with it."),
            });
        }
        let text = format!("Question: {question}\nAnswer: {answer}\n");
        fs::write(self.stub.fixture_path(&req.prompt), &text).expect("write fixture");
        Ok(text)
    }
}

fn main() {
    let dir: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let completions = dir.join("completions");
    if completions.exists() {
        fs::remove_dir_all(&completions).expect("clear completions");
    }
    fs::create_dir_all(&completions).expect("create fixtures dir");

    let images: Vec<ImageRecord> = (0..IMAGES).map(image).collect();
    let records: Vec<ManifestRecord> = images.iter().map(ManifestRecord::from).collect();
    io::write_atomic(
        &dir.join("manifest.jsonl"),
        io::to_jsonl(&records).as_bytes(),
    )
    .unwrap();
    let kb = knowledge();
    io::save_knowledge(&kb, &dir.join("knowledge.json")).unwrap();

    let recorder = Recorder {
        stub: StubProvider::new(&completions),
    };
    let out = forge(&images, &kb, &recorder, &ForgeOptions::default()).expect("forge");
    let total: usize = out.samples.iter().map(|(_, s)| s.len()).sum();
    println!(
        "{} images, {} knowledge entries, {} samples, {} completions",
        images.len(),
        kb.len(),
        total,
        fs::read_dir(&completions).unwrap().count()
    );
}
