/**
 * whistlerlab-render --in DIR --out DIR
 *
 * Walks the input directory for whistlerlab CLI artifacts, renders one SVG
 * per figure plus an HTML index linking everything with config hashes.
 * Pure reader: physics numbers are never recomputed; fitted slopes are
 * re-fit and must agree with the CLI-emitted values to 1e-6.
 */

import * as fs from 'fs';
import * as path from 'path';

import {
  HtmlSection,
  RenderedFigure,
  certificateSection,
  normsSection,
  renderConeHistogram,
  renderEnergy,
  renderPsdo,
  renderRayBundle,
  renderSmoothing,
} from './artifacts.js';

interface Args {
  inDir: string;
  outDir: string;
}

export function parseArgs(argv: string[]): Args {
  let inDir = '';
  let outDir = '';
  for (let i = 0; i < argv.length; i++) {
    if (argv[i] === '--in') inDir = argv[++i];
    else if (argv[i] === '--out') outDir = argv[++i];
    else throw new Error(`unknown argument ${argv[i]}`);
  }
  if (!inDir || !outDir) throw new Error('usage: render --in DIR --out DIR');
  return { inDir, outDir };
}

function* walkDirs(root: string): Generator<string> {
  yield root;
  for (const entry of fs.readdirSync(root, { withFileTypes: true })) {
    if (entry.isDirectory()) yield* walkDirs(path.join(root, entry.name));
  }
}

export interface RenderReport {
  figures: RenderedFigure[];
  sections: HtmlSection[];
  indexFile: string;
}

export function renderAll(inDir: string, outDir: string): RenderReport {
  if (!fs.existsSync(inDir)) throw new Error(`input directory not found: ${inDir}`);
  fs.mkdirSync(outDir, { recursive: true });
  const figures: RenderedFigure[] = [];
  const sections: HtmlSection[] = [];
  for (const dir of walkDirs(inDir)) {
    for (const builder of [renderRayBundle, renderConeHistogram, renderSmoothing, renderPsdo, renderEnergy]) {
      const fig = builder(dir, outDir);
      if (fig) figures.push(fig);
    }
    for (const sec of [certificateSection(dir), normsSection(dir)]) {
      if (sec) sections.push(sec);
    }
  }
  const indexFile = path.join(outDir, 'index.html');
  fs.writeFileSync(indexFile, buildIndex(figures, sections));
  return { figures, sections, indexFile };
}

function buildIndex(figures: RenderedFigure[], sections: HtmlSection[]): string {
  const figureHtml = figures
    .map(
      (f) => `
    <section>
      <h2>${f.title}</h2>
      <p class="meta">config ${f.configHash || 'n/a'}${f.notes.length ? ' — ' + f.notes.join(', ') : ''}</p>
      <a href="${f.file}"><img src="${f.file}" alt="${f.title}" width="640"/></a>
    </section>`,
    )
    .join('\n');
  const sectionHtml = sections
    .map(
      (s) => `
    <section>
      <h2>${s.title}</h2>
      <p class="meta">config ${s.configHash || 'n/a'}</p>
      ${s.html}
    </section>`,
    )
    .join('\n');
  return `<!doctype html>
<html>
<head>
<meta charset="utf-8"/>
<title>whistlerlab report</title>
<style>
  body { font-family: system-ui, sans-serif; margin: 2rem auto; max-width: 760px; color: #222; }
  h1 { border-bottom: 2px solid #444; padding-bottom: 0.3rem; }
  .meta { color: #666; font-size: 0.85rem; }
  table { border-collapse: collapse; margin: 0.5rem 0; }
  td, th { border: 1px solid #bbb; padding: 0.3rem 0.7rem; text-align: left; }
  tr.pass td:last-child, strong.pass { color: #1a7f37; }
  tr.fail td:last-child, strong.fail { color: #b91c1c; }
  section { margin-bottom: 2rem; }
</style>
</head>
<body>
<h1>whistlerlab report</h1>
${figureHtml}
${sectionHtml}
</body>
</html>
`;
}

const isMain = process.argv[1] !== undefined && import.meta.url.endsWith(path.basename(process.argv[1]));
if (isMain) {
  try {
    const { inDir, outDir } = parseArgs(process.argv.slice(2));
    const report = renderAll(inDir, outDir);
    console.log(`rendered ${report.figures.length} figures, ${report.sections.length} sections -> ${report.indexFile}`);
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    process.exit(1);
  }
}
