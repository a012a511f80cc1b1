#pragma once

#include "chatsos/agent.hpp"
#include "chatsos/config.hpp"
#include "chatsos/corpus.hpp"
#include "chatsos/embedding.hpp"
#include "chatsos/error.hpp"
#include "chatsos/evaluation.hpp"
#include "chatsos/llm.hpp"
#include "chatsos/ngram.hpp"
#include "chatsos/prompt.hpp"
#include "chatsos/remote_embedder.hpp"
#include "chatsos/service.hpp"
#include "chatsos/snapshot.hpp"
#include "chatsos/store.hpp"
#include "chatsos/text.hpp"
#include "chatsos/tsne.hpp"
