import tempfile
from pathlib import Path

import torch
from django.test import SimpleTestCase

from solver.checkpoints import MAGIC, read_checkpoint, write_checkpoint
from solver.exceptions import CheckpointError
from solver.nets import init_bundle


class CheckpointTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.path = Path(self.tmp.name) / "nested" / "step_001.ckpt"
        self.bundle = init_bundle((3, 5, 4, 1), "mish", p=3, seed=9, output_scale=12.5)

    def test_restores_identical_bundle(self):
        write_checkpoint(self.path, self.bundle)
        restored = read_checkpoint(self.path)
        self.assertEqual(restored.layer_sizes, (3, 5, 4, 1))
        self.assertEqual(restored.p, 3)
        self.assertEqual(restored.activation.value, "mish")
        self.assertEqual(restored.output_scale, 12.5)
        self.assertTrue(torch.equal(restored.theta, self.bundle.theta))

    def test_rejects_foreign_file(self):
        self.path.parent.mkdir(parents=True)
        self.path.write_bytes(b"NOTACKPT" + bytes(64))
        with self.assertRaises(CheckpointError):
            read_checkpoint(self.path)

    def test_rejects_truncated_parameters(self):
        write_checkpoint(self.path, self.bundle)
        blob = self.path.read_bytes()
        self.path.write_bytes(blob[:-8])
        with self.assertRaises(CheckpointError):
            read_checkpoint(self.path)
        self.path.write_bytes(blob[:-3])
        with self.assertRaises(CheckpointError):
            read_checkpoint(self.path)

    def test_rejects_truncated_header(self):
        self.path.parent.mkdir(parents=True)
        self.path.write_bytes(MAGIC + bytes(6))
        with self.assertRaises(CheckpointError):
            read_checkpoint(self.path)
