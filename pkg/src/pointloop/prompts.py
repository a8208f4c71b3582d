"""Pinned prompt texts used across the pipeline, benchmark, and judges.

The annotation, refinement, judging, rephrasing, and template prompts are
fixed strings: tests assert the engine sends them byte-for-byte, so edit
with care. Instruction-synthesis templates are deliberately configurable
defaults (callers may override per run).
"""

from __future__ import annotations

# Stage 1: caption a point cloud with explicit depth/spatial/geometric focus.
POINT_ANNOTATION_PROMPT = (
    "Caption this 3D model in detail, describing its depth, spatial, and geometric information"
)

# Stage 2: cross-check a caption against rendered views, preserving 3D facts.
# The caption under refinement is appended after the final colon.
VIEW_REFINEMENT_PROMPT_TEMPLATE = (
    "You are a helpful AI assistant. Now I will give you a description of a 3D model "
    "and several rendering images of this 3D model.\n"
    "\n"
    "You should correct the incorrect content that does not match the images, and "
    "refine this 3D description according to the given images in terms of its "
    "appearance and details.\n"
    "\n"
    "Do not edit depth, spatial, or relative position information: {caption}"
)

# Fallback captioning prompt for the image-only ablation (no point backend).
VIEW_CAPTION_PROMPT = (
    "You are a helpful AI assistant. Describe the object shown in these rendered "
    "images of a 3D model in detail."
)

# Benchmark ground-truth construction.
REPHRASE_PROMPT = (
    "Rephrase this description of a 3D object using totally different vocabulary "
    "and sentence structure. Keep the original information accurate, do not add "
    "more information"
)

ASPECT_NAMES = ("description", "color", "shape", "count", "spatial", "usage")

# Wraps REPHRASE_PROMPT with the structured six-section output contract.
BENCH_REPHRASE_TEMPLATE = (
    REPHRASE_PROMPT + ".\n"
    "Split the result into the six aspects below, one per line, each formatted as\n"
    '"<aspect>": "<text>"\n'
    "Aspects: description, color, shape, count, spatial, usage. Leave spatial empty "
    "if the object is a single, cohesive entity.\n"
    "\n"
    "Description: {caption}"
)

SYNONYM_PROMPT_TEMPLATE = (
    "Generate 3-5 synonyms as ground-truth labels for the class of the object "
    "described below. Reply with a comma-separated list only.\n"
    "\n"
    "{caption}"
)

# Zero-shot template mining: swap the core noun for a placeholder.
TEMPLATE_PROMPT = (
    "Replace the core noun word in the sentence by { } , while keeping the other "
    "information accurate."
)

# Evaluation-time probes.
CAPTION_EVAL_PROMPT = "Caption this 3D model in detail."
INSTRUCTION_CLS_PROMPT = "What is this?"
COMPLETION_CLS_PROMPT = "This is an object of "

# Judge prompt for generative classification; expects "T#..." / "F#...".
CLS_JUDGE_PROMPT_TEMPLATE = (
    "You are a helpful AI assistant. Now, I will give you an answer from the model "
    "and an answer from the label.\n"
    "\n"
    "All you need to do is focus on these two answers and figure out whether they "
    "are referring to the same general class, focusing on the class of object, not "
    "attributes such as color, shape, count, spatial or usage.\n"
    "Respond with 'T' if they refer to the same class and 'F' if not. Also, provide "
    "a brief rationale (no more than 20 words) for your judgment.\n"
    "\n"
    "Remember, the answer from the model refers to one of the answers from the "
    "label; even if the answer from the model refers to the subclass of one of the "
    "answers from the label, you should respond as 'T'.\n"
    "Your response should follow the judgement standard of the prompt I give.\n"
    "Firstly, I will give you two examples of answer pairs as well as their "
    "responses:\n"
    "\n"
    "Example1:\n"
    "Input: 1. wooden board, table, pottery 2. This is a 3D model of wooden table.\n"
    "Output: T#Both refer to a table.\n"
    "\n"
    "Example2:\n"
    "Input: 1. historical vehicle, pioneer wagon, covered wagon, prairie schooner "
    "2. The 3D object model depicts a quaint, old-fashioned cart. The cart is "
    "entirely brown, with two sturdy wooden wheels for mobility. The main body of "
    "the cart is in the shape of a large, semicircular curve, made of wood and "
    "affixed to the wheels. This curved body extends backward, forming a simple, "
    "straight tail. Despite its simplicity, it reflects a nostalgic charm and could "
    "be used in settings like historical reenactments, antiquated transportation "
    "exhibits, or in visual media for a touch of old-world atmosphere.\n"
    "Output: F#One refers to a wagon, the other to a truck.\n"
    "\n"
    "Now, analyze the following:\n"
    "Input: 1. {ground_truth} 2. {model_output}\n"
    "Output: "
)

_CAPTION_JUDGE_EXAMPLE_LABEL = (
    '"description": "This 3D model displays a wooden rectangular platform adorned '
    "with various items on top. The setup features a sizable dark clay vessel or "
    "cauldron positioned on a miniature stand at one end of the platform. At the "
    "other end, a table-like structure supports books, miniature vases, and what "
    "seems to be a witch's hat. The entire arrangement is decorated with vibrant "
    "speckles or splashes of paint in red, green, and blue, creating a magical or "
    'whimsical feel. The wood surface shows clear plank marks and a textured finish.",\n'
    '"color": "The base displays a wooden brown shade, decorated with vibrant '
    "speckles in red, green, and blue. The large vessel is dark gray. The table "
    "holds brown books, two small vases (one blue and one green), and a dark gray "
    "pointed hat. The table also features the same speckled pattern as the wooden "
    'platform.",\n'
    '"shape": "The principal structure is a rectangular wooden platform. It '
    'includes a circular pot at one end and a rectangular table at the other.",\n'
    '"count": "The arrangement includes several items: one large pot, one table, '
    'multiple books, at least two small vases, and one pointed hat.",\n'
    '"spatial": "The clay vessel is situated at one end of the wooden platform. '
    "The table, bearing various items, is located at the opposite end. All "
    'elements are positioned on the wooden platform.",\n'
    '"usage": "This 3D model can be used in video games, animations, or virtual '
    "settings to craft a scene with a magical or fantasy theme, perhaps associated "
    'with witchcraft or alchemy. It can also be used for reading, writing, and eating."'
)

_CAPTION_JUDGE_EXAMPLE_MODEL = (
    '"This model portrays a vivid scene of a cartoon-styled table, overflowing '
    "with a variety of objects. The table seems to be in use, showcasing a "
    "naturalistic depiction of a cluttered table in a domestic or workspace. "
    "Objects on it reflect common items like books, pencils, cups, etc. suggesting "
    "its functionality as a piece of furniture where different activities such as "
    'reading, writing, or drinking can be performed."'
)

# Judge prompt for six-aspect caption scoring; expects the final
# "Scores for each aspects: **[...]**" bracket.
CAPTION_JUDGE_PROMPT_TEMPLATE = (
    "You are a helpful AI assistant. Now, I will give you an answer from the model "
    "and an answer from the label.\n"
    "All you need to do is to evaluate these two answers from six aspects "
    "separately:\n"
    '1. "description": Giving a comprehensive description of the whole 3D model.\n'
    '2. "color": Demonstrating the color attribute of the whole or the individual '
    "objects.\n"
    '3. "shape": Demonstrating the geometric attribute of the whole or the '
    "individual objects.\n"
    '4. "count": Counting the number of the whole or the individual objects.\n'
    '5. "spatial": Understanding the spatial relations between multiple objects in '
    "the 3D model.\n"
    '6. "usage": Demonstrating the usage or the production purpose of the 3D model.\n'
    "\n"
    "For any aspect above, you should identify the aspects mentioned in the answer "
    "from the model and calculate the percentage of these aspects correctly "
    "mentioned or partially matched in the answer from the label.\n"
    "Remember the score is to evaluate how much the two answers match.\n"
    "When evaluating and comparing each criterion, do not take other criteria into "
    "consideration.\n"
    "Score from 0 to 100. Consider similar concepts and synonyms.\n"
    "\n"
    "Your response should include the scores of the six criteria (description, "
    "color, shape, count, spatial, and usage score) in the order above.\n"
    "Remember all scores range from 0 to 100.\n"
    "Firstly, I will give you several answer pairs and their corresponding scores. "
    "Your response format should follow the example of the prompt I give:\n"
    "\n"
    "Provide your score (0-100) in the format of below:\n"
    "'\n"
    "Scores for each aspects: **[description score, color score, shape score, "
    "count score, spatial score, usage score]**\n"
    "'\n"
    "For clarity, consider this example:\n"
    "\n"
    "Label:\n"
    + _CAPTION_JUDGE_EXAMPLE_LABEL + "\n"
    "\n"
    "Model: " + _CAPTION_JUDGE_EXAMPLE_MODEL + "\n"
    "\n"
    "Output: Scores for each aspects: **[35,0,0,30,35,75]**\n"
    "\n"
    "Now score the following:\n"
    "Label: {ground_truth}\n"
    "Model: {model_output}\n"
    "Output: "
)

# Instruction-synthesis defaults. These are artifact-side templates (the
# upstream procedure does not publish its own); callers may swap them out
# per run, and the engine logs whichever template it used.
INSTRUCTION_SYNTHESIS_TEMPLATES = {
    "brief": (
        "Write one short sentence describing the 3D object below. Reply with the "
        "sentence only.\n\nDescription: {caption}"
    ),
    "detailed": (
        "Write a detailed paragraph describing the 3D object below, keeping every "
        "stated fact. Reply with the paragraph only.\n\nDescription: {caption}"
    ),
    "single_round": (
        "Based on the 3D object description below, write one question a user could "
        "ask about the object and its answer. Format exactly:\nQ: <question>\n"
        "A: <answer>\n\nDescription: {caption}"
    ),
    "multi_round": (
        "Based on the 3D object description below, write a dialogue of 2 to 4 "
        "question-answer turns about the object. Format each turn exactly as:\n"
        "Q: <question>\nA: <answer>\n\nDescription: {caption}"
    ),
}

# Fixed user-turn texts stored in brief/detailed instruction records.
BRIEF_INSTRUCTION = "Give a brief description of this 3D model."
DETAILED_INSTRUCTION = "Describe this 3D model in detail."
