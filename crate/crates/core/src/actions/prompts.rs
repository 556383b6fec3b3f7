// Compiled-in prompt templates, one per agent action. Placeholders use
// `{slot_name}`; see `Slot::name` for the recognised names.

pub(super) const SPEAK_USER_STORIES: &str = "\
We are planning a new software system. Here is the rough idea:

{rough_idea_of_requirements}

Describe what you need from this system as user stories. Write exactly {num_user_stories} user stories, \
one per line, numbered, each in the form \"As a <kind of user>, I want <capability>, so that <benefit>.\" \
Write nothing else.";

pub(super) const PROPOSE_QUESTION: &str = "\
You are interviewing the stakeholders of a planned system.

Rough idea:
{rough_idea_of_requirements}

User stories collected so far:
{user_stories}

Questions already asked:
{requirement_question}

Answers already given:
{requirement_answer}

Ask one new question that uncovers a missing, unclear or conflicting need. Do not repeat a question \
that was already asked. Reply with the question only.";

pub(super) const ANSWER_QUESTION: &str = "\
Rough idea of the planned system:
{rough_idea_of_requirements}

The requirements collector asks you:
{requirement_question}

Answer from your point of view as a stakeholder. Be concrete about who uses the system, what it must do \
and which devices or external systems it deals with. Reply with the answer only.";

pub(super) const WRITE_REQ_DRAFT: &str = "\
Write the requirements draft for the planned system.

Rough idea:
{rough_idea_of_requirements}

User stories:
{user_stories}

Interview questions:
{requirement_question}

Stakeholder answers:
{requirement_answer}

Feedback from the human reviewer:
{human_feedback}

Problems found by the last quality check (fix all of them):
{error_report}

Follow this template. Keep every section heading, in order, as a Markdown heading:

{draft_template}";

pub(super) const EXTRACT_ENTITY: &str = "\
Requirements metamodel:
{requirement_meta_model}

Requirements draft:
{requirement_draft}

Identify every modeling entity of the metamodel that the draft mentions. Use the entity type names \
exactly as the metamodel spells them and name each entity with a short noun phrase taken from the draft.

Respond with only a JSON object whose keys are entity types and whose values are arrays of entity names:
{\"<entity_type>\": [\"<entity name>\", ...], ...}";

pub(super) const EXTRACT_RELATION: &str = "\
Requirements metamodel:
{requirement_meta_model}

Requirements draft:
{requirement_draft}

Modeling entities already identified:
{modeling_entities}

For every pair of entities decide whether the draft states a relation between them, and if so which \
relation type of the metamodel it is. Only use the entity names listed above.

Respond with only a JSON array:
[{\"source\": \"<entity name>\", \"type\": \"<relation type>\", \"target\": \"<entity name>\"}, ...]";

pub(super) const CHECK_REQUIREMENT: &str = "\
Requirements draft:
{requirement_draft}

Requirements model entities:
{modeling_entities}

Requirements model relations:
{modeling_relationship}

Check the quality of the draft against the model. Report every requirements smell you find. Smell \
categories are incompleteness (a needed requirement or model element is missing), incorrectness (a \
statement or element is wrong), inconsistency (draft and model, or two statements, contradict each \
other) and ambiguity (a statement can be read more than one way). If there are no smells the draft passes.

Respond with only a JSON object:
{\"passed\": <true|false>, \"smells\": [{\"category\": \"<category>\", \"location\": \"<where>\", \"description\": \"<what is wrong>\"}]}";

pub(super) const WRITE_SRS: &str = "\
Write the software requirements specification.

Requirements draft:
{requirement_draft}

Requirements model entities:
{modeling_entities}

Requirements model relations:
{modeling_relationship}

Follow this template. Keep every section heading, in order, as a Markdown heading:

{SRS_template}";

pub(super) const WRITE_CHECK_REPORT: &str = "\
The quality check of the requirements draft failed with this result:

{checking_message}

Write an error report for the requirements collector and modeler. For each smell state where it is, \
what is wrong and what must change. Use Markdown.";
