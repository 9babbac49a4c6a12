/** Browser entry point: model picker, schema-driven attribute editors, and
 * the two result panels. All numbers on screen come from service responses. */

import { ApiClient } from './api.js';
import { renderForceSvg } from './force.js';
import { WhatIfSession } from './session.js';
import type { FeatureSchemaRow, WhatIfSide } from './types.js';

const BASE_URL =
  new URLSearchParams(location.search).get('api') ?? 'http://127.0.0.1:8000';

const api = new ApiClient(BASE_URL);

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text = '',
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) {
    node.setAttribute(k, v);
  }
  if (text) {
    node.textContent = text;
  }
  return node;
}

function editorFor(
  row: FeatureSchemaRow,
  initial: number,
  onChange: (value: number) => void,
): HTMLElement {
  const wrap = el('div', { class: 'editor' });
  wrap.appendChild(el('label', {}, row.name));
  if (row.kind === 'boolean') {
    const box = el('input', { type: 'checkbox' });
    box.checked = initial !== 0;
    box.addEventListener('change', () => onChange(box.checked ? 1 : 0));
    wrap.appendChild(box);
  } else if (row.kind === 'categorical' && row.levels?.length) {
    const select = el('select');
    for (const level of row.levels) {
      select.appendChild(el('option', { value: level }, level));
    }
    select.addEventListener('change', () => onChange(select.selectedIndex));
    wrap.appendChild(select);
  } else {
    const lo = initial === 0 ? 0 : initial / 4;
    const hi = initial === 0 ? 1 : initial * 4;
    const slider = el('input', {
      type: 'range',
      min: String(lo),
      max: String(hi),
      step: String((hi - lo) / 200 || 1),
      value: String(initial),
    });
    const box = el('input', { type: 'number', value: String(initial) });
    slider.addEventListener('input', () => {
      box.value = slider.value;
      onChange(Number(slider.value));
    });
    box.addEventListener('change', () => {
      slider.value = box.value;
      onChange(Number(box.value));
    });
    wrap.appendChild(slider);
    wrap.appendChild(box);
  }
  const err = el('span', { class: 'field-error', 'data-field': row.name });
  wrap.appendChild(err);
  return wrap;
}

function renderSide(panel: HTMLElement, title: string, side: WhatIfSide | null): void {
  panel.innerHTML = '';
  panel.appendChild(el('h3', {}, title));
  if (!side) {
    panel.appendChild(el('p', {}, 'no result yet'));
    return;
  }
  panel.appendChild(
    el('p', { class: 'score' },
       `score ${side.score} ${side.certified ? '(certified)' : ''} | ` +
       `ratio ${side.eer.toFixed(3)} | predicted ${side.predicted.toFixed(1)}`),
  );
  const holder = el('div');
  holder.innerHTML = renderForceSvg(side.force);
  panel.appendChild(holder);
}

async function start(): Promise<void> {
  const root = document.getElementById('app')!;
  const models = await api.listModels();
  if (models.length === 0) {
    root.textContent = 'no models registered yet - train one first';
    return;
  }
  const picker = el('select', { id: 'model-picker' });
  for (const m of models) {
    picker.appendChild(
      el('option', { value: m.model_id }, `${m.peer_group || m.model_id} (${m.kind})`),
    );
  }
  root.appendChild(picker);
  const form = el('div', { id: 'editors' });
  const basePanel = el('div', { class: 'panel', id: 'baseline' });
  const modPanel = el('div', { class: 'panel', id: 'modified' });
  const delta = el('p', { id: 'delta' });
  const errorLine = el('p', { id: 'error', class: 'error' });
  root.append(form, errorLine, basePanel, modPanel, delta);

  let session: WhatIfSession | null = null;

  async function loadModel(modelId: string): Promise<void> {
    const entry = await api.getModel(modelId);
    const record: Record<string, number> = {};
    for (const row of entry.feature_schema) {
      record[row.name] = 0;
    }
    session = new WhatIfSession(api, modelId, record);
    form.innerHTML = '';
    for (const row of entry.feature_schema) {
      form.appendChild(
        editorFor(row, 0, (value) => {
          session!.setOverride(row.name, value);
          void refresh();
        }),
      );
    }
    await refresh();
  }

  async function refresh(): Promise<void> {
    if (!session) {
      return;
    }
    const rendered = await session.submitWhatIf();
    if (!rendered) {
      return; // superseded by a newer edit
    }
    errorLine.textContent = session.lastError ?? '';
    form.querySelectorAll('.field-error').forEach((span) => {
      const field = (span as HTMLElement).dataset.field!;
      span.textContent = session!.fieldErrors[field] ?? '';
    });
    renderSide(basePanel, 'baseline', session.baselineResult);
    renderSide(modPanel, 'what-if', session.modifiedResult);
    delta.textContent =
      session.deltaScore === null ? '' : `score delta: ${session.deltaScore}`;
  }

  picker.addEventListener('change', () => void loadModel(picker.value));
  await loadModel(models[0].model_id);
}

void start();
