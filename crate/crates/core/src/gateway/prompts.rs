//! Role-specific prompt templates.
//!
//! Template text is a versioned artifact: tests pin the operative parts
//! (role line, constraints, JSON schema) so a wording change that would alter
//! model behavior fails loudly.

/// Candidate block shared by routing and retrieval-selection prompts.
pub fn candidate_block(
    cluster_id: u64,
    summary: &str,
    tags: &[String],
    snippets: &[String],
) -> String {
    let mut block = format!(
        "cluster_{cluster_id}:\n  summary: {summary}\n  tags: {}\n",
        tags.join(", ")
    );
    for snippet in snippets {
        block.push_str(&format!("  example: {snippet}\n"));
    }
    block
}

pub fn cluster_selection(
    content: &str,
    context: &str,
    tags: &[String],
    candidates_text: &str,
) -> String {
    format!(
        "You are a memory routing assistant.\n\n\
         A new memory has arrived:\n\
         - Content: {content}\n\
         - Context: {context}\n\
         - Tags: {tags}\n\n\
         Candidate clusters, pre-selected by vector similarity:\n\
         {candidates_text}\n\
         Your task:\n\
         1. Weigh each candidate's topic and context against the new memory.\n\
         2. Pick the one cluster_id whose theme fits the memory best.\n\
         3. You MUST choose exactly one cluster_id from the candidate list.\n\n\
         - Do NOT output any text that is not a valid cluster_id.\n\n\
         Return ONLY a JSON object in this format (this is an example):\n\n\
         {{\n\"choice\": \"cluster_1\"\n}}\n\n\
         Where:\n\
         - cluster_1 must be replaced with one of the actual cluster ids from the candidate list above.\n\
         - Do not include comments or extra fields.",
        tags = tags.join(", "),
    )
}

pub fn profile_generation(samples_text: &str) -> String {
    format!(
        "You are a memory clustering assistant.\n\n\
         Below are several memory snippets that belong to the SAME cluster:\n\n\
         {samples_text}\n\
         Your task:\n\
         1. Write ONE short sentence summary that best describes the main topic of this cluster.\n\
         2. Return EXACTLY 3 tags.\n\
         - Each tag must be a single word.\n\
         - Do NOT repeat the same tag.\n\n\
         Return ONLY a JSON object with the following KEYS (this is a schema, not the actual content):\n\n\
         {{\n    \"summary\": \"...your one-sentence summary here...\",\n    \"tags\": [\"tag_1\", \"tag_2\", \"tag_3\"]\n}}"
    )
}

pub fn retrieval_selection(
    query: &str,
    query_tags: &[String],
    candidates_text: &str,
    top_n: usize,
) -> String {
    format!(
        "You are an AI memory router that selects the most relevant memory clusters for a given query.\n\n\
         You will be given several candidate clusters. Each cluster has:\n\
         - cluster_id\n\
         - one-sentence summary\n\
         - optional tags\n\
         - one or more representative memory examples\n\n\
         Your task:\n\
         1. Read the user query and query_tags.\n\
         2. Judge each candidate cluster's relevance to them.\n\
         3. Decide how many clusters are actually needed. You should return between 0 and {top_n} clusters.\n\
         - If one cluster is definitely sufficient for answering the query, return just that one.\n\
         - Include additional clusters if they are needed for answering the query.\n\
         4. If none of the clusters are meaningfully related, return an empty list.\n\n\
         Return ONLY JSON with this format:\n\
         {{\n  \"selected_clusters\": [ \"cluster_id_1\", \"cluster_id_2\" ]\n}}\n\n\
         If no cluster is relevant, return:\n\
         {{\n  \"selected_clusters\": []\n}}\n\n\
         User query: {query}\n\
         Query tags: {query_tags}\n\n\
         Candidate clusters:\n\
         {candidates_text}",
        query_tags = query_tags.join(", "),
    )
}

pub fn annotation(content: &str) -> String {
    format!(
        "You are a memory annotation assistant.\n\n\
         A new memory has arrived:\n\
         {content}\n\n\
         Your task:\n\
         1. List the salient keywords of this memory (at least one, each a short lowercase phrase).\n\
         2. List topical tags (at least one, each a single lowercase word).\n\
         3. Write ONE sentence describing the situation this memory captures.\n\n\
         Return ONLY a JSON object with these keys:\n\n\
         {{\n  \"keywords\": [\"...\"],\n  \"tags\": [\"...\"],\n  \"context\": \"...one sentence...\"\n}}"
    )
}

pub fn evolution(new_note_block: &str, neighbors_block: &str) -> String {
    format!(
        "You are a memory evolution assistant. A new memory has joined a cluster; \
         decide how it connects to its nearest neighbors and whether any neighbor's \
         annotations should be refreshed in light of it.\n\n\
         New memory:\n{new_note_block}\n\n\
         Neighbor memories (same cluster):\n{neighbors_block}\n\
         Your task:\n\
         1. Choose which neighbor note ids the new memory should link to (possibly none).\n\
         2. Optionally revise a neighbor's context, tags, or keywords. Never rewrite its content.\n\n\
         Return ONLY a JSON object with these keys:\n\n\
         {{\n  \"links\": [note_id, ...],\n  \"revisions\": [\n    {{\"note_id\": 0, \"context\": \"...\", \"tags\": [\"...\"], \"keywords\": [\"...\"]}}\n  ]\n}}\n\n\
         Omit \"context\", \"tags\", or \"keywords\" inside a revision to leave that field unchanged. \
         Use an empty list for \"revisions\" when nothing needs updating.",
    )
}

pub fn answering(query: &str, notes_block: &str) -> String {
    format!(
        "You are a memory-grounded question answering assistant.\n\n\
         Retrieved memories:\n{notes_block}\n\
         Question: {query}\n\n\
         Answer the question using only the retrieved memories. \
         Reply with the answer text alone: no preamble, no explanation, no JSON.",
    )
}
