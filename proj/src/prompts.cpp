#include "procrit/prompts.hpp"

#include "procrit/errors.hpp"

namespace procrit::prompts {

namespace {

constexpr std::string_view kSystemPrompt = R"PROMPT(A conversation between User and Assistant. The Assistant is an expert AI specializing in embodied procedure and event reasoning based on visual input.

You will be provided with three types of visual information:
(1) Initial State - an image showing the starting condition,
(2) Video - capturing the procedure from Initial State to Current State,
(3) Current State - an image showing the ending condition.

You must analyze all three inputs together to understand the complete task progression and answer the question.

The assistant must strictly follow a specific thought process and output format. The reasoning process is enclosed within <think> </think> tags, and the final answer is within <answer> </answer> tags.

The <think> block must contain three ordered subsections: <planning>, <observation>, and <reasoning>.

The <answer> block must contain only the final output required by the question type and no other commentary.)PROMPT";

constexpr std::string_view kTemplateHead = R"PROMPT(Analyze the provided visual data and reason about the ongoing task.

Please think about this question as if you were a human pondering deeply. Provide your detailed reasoning between the <think> and </think> tags, following the subsections <planning>, <observation>, and <reasoning>. Then give your final answer between the <answer> and </answer> tags.

Below is the required template:

<think>
<planning>
Identify the high-level goal of the agent, what is the initial state? What does successful completion look like?
Break down the high-level goal into a logical sequence of canonical steps. This serves as your mental plan for interpreting the task.
Use this plan to interpret actions, map observed behaviors to steps, assess progress, detect anomalies, and predict what happens next.
</planning>

<observation>
View the video as a temporal sequence of actions contributing to the procedure.
Objectively describe what is occurring in the current moment, noting evidence of progress or state changes.
Identify fine-grained actions and explain how they move the task forward.
List relevant objects, tools, and environmental context, emphasizing functional states and transformations.
Note cues—repetition, transitions, or completion indicators—that situate the action in the procedural script.
</observation>

<reasoning>
Think through the question as a human would, engage in an internal dialogue using expressions such as 'let me think', 'wait', 'hmm', 'oh, I see', 'let's break it down', etc.
Connect observations to the procedural plan to determine which step is being executed, progress, correctness, or anomalies.
Reflect on assumptions, verify interpretations, and, if appropriate, predict the agent's next likely action.
Synthesize understanding of what the agent is doing, how it fits into the broader task, and whether the process seems successful.
You are encouraged to include self-reflection or verification in your reasoning process.
</reasoning>
</think>

<answer>
Final answer here — strictly follow the )PROMPT";

constexpr std::string_view kTemplateTail = R"PROMPT( output format and include no extra commentary.
</answer>)PROMPT";

constexpr std::array<std::string_view, kNumQuestionVariations> kQuestions = {
    "How much of the task has been completed?",
    "What percentage of the task is finished?",
    "How complete is the task in the video?",
    "Estimate the completion percentage of the task.",
    "How far along is the agent in completing the task (in percent)?",
    "To what extent has the task been completed?",
    "Please estimate how much of the task has been done (0-100%).",
    "What fraction of the task appears to be finished?",
    "How much progress has been made toward completing the task?",
    "Give the approximate percentage of task completion.",
    "Based on the video, what is the task's completion percentage?",
    "Considering the ongoing actions, how complete is the task execution?",
    "From the current progress shown, estimate how much of the task is done.",
    "According to the visual evidence, what is the completion rate of the task?",
    "Based on the observed steps, how far has the task progressed?",
    "Judging from the video, how much of the overall task has been achieved?",
    "Based on the actions shown, estimate the percentage of task completion.",
    "Using the video context, determine how much progress has been made.",
    "According to the current situation, what percent of the task is completed?",
    "What is the estimated completion rate of the task shown in this clip?",
    "Task completion percentage?",
    "Estimate task progress (0-100%).",
    "Completion rate of the task?",
    "Task progress percentage based on the video?",
    "How much of the task is done (in %)?",
    "Approximate percent of task completion?",
    "Predicted completion level (0-100)?",
    "What's the completion percentage?",
    "Estimate progress ratio (0% or 100%)?",
    "Task progress estimation in percentage?",
    "How complete is the overall procedure in the video?",
    "What's the current progress percentage for this task?",
    "Evaluate the current completion level of the task.",
    "How much has the agent accomplished in this task?",
    "Determine the completion percentage of the process.",
    "Provide an estimate of how much of the task is done.",
    "What's the current progress ratio of the operation?",
    "Estimate how complete the ongoing task is.",
    "What is the approximate progress achieved so far?",
    "Based on the video evidence, how much of the task is finished?",
    "According to the observed actions, what percentage is complete?",
    "How far has the agent advanced in completing the task?",
    "Quantify the level of task completion (0-100%).",
    "Provide a numeric estimate of task completion.",
    "Indicate how much of the task is completed.",
    "What portion of the task has been done so far?",
    "Compute the completion percentage for the current task.",
    "Estimate the proportion of the completed task.",
    "Evaluate the current progress made toward completion.",
    "How progressed is the task shown in this video?",
    "Based on this clip, what’s the completion percentage?",
    "How much progress has the agent made so far?",
    "Indicate the task completion rate as a percentage.",
    "What’s the estimated completion percentage of the shown task?",
    "Approximately what percentage of the task is complete?",
    "How advanced is the task execution in this clip?",
    "What is the current task progress in numeric terms?",
    "From the visual information, estimate the completion percent.",
    "Provide an approximate completion percentage.",
    "How far along toward completion is the task?",
    "Based on the actions, how complete is the task process?",
    "What is the overall completion rate of this task?",
    "Estimate the progress level of the operation (0-100).",
    "To what degree is the task completed according to the video?",
    "Provide an estimation of the task completion level.",
    "How much work has been completed in the task so far?",
    "How complete is the process illustrated in the video?",
    "What's the approximate task completion ratio?",
    "How much of the procedure has been achieved?",
    "Provide a numerical estimate of progress toward completion.",
    "Based on what's shown, estimate the completion level.",
    "How much of the total work has been finished?",
    "Provide a completion score between 0 and 100.",
    "What is the predicted task completion rate?",
    "Please quantify how much progress the agent has made.",
    "How much of the defined task has already been accomplished?",
    "What's the expected percentage of task completion?",
    "From this video, estimate how much the task has progressed.",
    "How much progress can be observed in the task execution?",
    "What is the level of completion observed?",
    "According to the video, what's the completion score?",
    "How complete is the operation displayed?",
    "Determine the degree of completion (in percentage).",
    "How far toward full completion has the agent progressed?",
    "Report the completion rate inferred from the video.",
    "Provide a completion estimate between 0 and 100 percent.",
    "What is the overall completion percentage observed?",
    "How much of the ongoing task is done so far?",
    "What is the measured completion proportion?",
    "Estimate the current percentage of finished work.",
    "Quantify the extent of completion visible in the video.",
    "How far along is the process in percentage terms?",
    "What percentage of the work has been achieved?",
    "Approximate how complete the shown procedure is.",
    "Indicate how much of the task remains unfinished.",
    "How close to full completion is the task right now?",
    "What percentage of the total task goal has been reached?",
    "How much of the intended activity has been completed?",
    "Give an estimated completion rate (0-100%).",
    "Estimate the degree of completion based on the given video.",
};

}  // namespace

std::string_view system_prompt() { return kSystemPrompt; }

std::string_view question_variation(int question_id) {
  if (question_id < 1 || question_id > kNumQuestionVariations)
    throw UsageError("question id " + std::to_string(question_id) + " outside [1, " +
                     std::to_string(kNumQuestionVariations) + "]");
  return kQuestions[static_cast<std::size_t>(question_id - 1)];
}

std::string_view type_instruction(QuestionType kind) {
  switch (kind) {
    case QuestionType::multiple_choice:
      return "Please provide only the single option letter (e.g., A, B, C, D, etc.).";
    case QuestionType::numerical: return "Please provide the numerical value (e.g., 42 or 3.14).";
    case QuestionType::ocr: return "Please transcribe text from the image/video clearly.";
    case QuestionType::free_form: return "Please provide your text answer directly.";
    case QuestionType::boolean: return "Please provide only 'Yes' or 'No'.";
    case QuestionType::progress: return "Please output a numerical number between 1 and 100.";
  }
  return "";
}

std::string_view type_category(QuestionType kind) {
  switch (kind) {
    case QuestionType::multiple_choice: return "Multiple Choice";
    case QuestionType::numerical: return "Numerical";
    case QuestionType::ocr: return "OCR";
    case QuestionType::free_form: return "Free-form";
    case QuestionType::boolean: return "Boolean";
    case QuestionType::progress: return "Progress";
  }
  return "";
}

std::string reasoning_template(QuestionType kind) {
  std::string out(kTemplateHead);
  out.append(type_category(kind)).append(kTemplateTail);
  return out;
}

}  // namespace procrit::prompts
