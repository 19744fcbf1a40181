'''
Study.py contains the Study object which owns an output directory.

The Study is largely a computational aid: it creates the standard subdirectories,
remembers which commands were run against the directory and keeps a registry of every
artifact (loops, designs, chains, bands, reports, figures) the subcommands wrote, so a
later subcommand can find the output of an earlier one.
'''

import os
import sys
import time
import json

from .utils import recursive_encoder, file_operations

STUDY_FILE = "study.json"


class Study:
    """
    The study object represents one output directory and the artifacts in it.
    """

    # determines where intermediates are stored
    subdirectories = {
        "loops": "loops/",
        "doe": "doe/",
        "chains": "chains/",
        "bands": "bands/",
        "infogain": "infogain/",
        "figures": "figures/",
    }

    def __init__(self, study_name, study_directory, command_history=None, artifacts=None, config=None):
        self.study_name = study_name
        self.study_directory = study_directory
        self.command_history = command_history if command_history is not None else []
        self.artifacts = artifacts if artifacts is not None else {}
        self.config = config

    @staticmethod
    def create_study(study_directory, study_name=None):
        """
        This is the main constructor for a study object.

        Args:
            study_directory (str): directory to which to write all outputs
            study_name (str): a moniker for the study, defaults to the directory name

        Returns:
            study object
        """
        root = os.path.abspath(study_directory)
        for subdir in [""] + list(Study.subdirectories.values()):
            os.makedirs(os.path.join(root, subdir), exist_ok=True)
        return Study(
            study_name or os.path.basename(root.rstrip(os.sep)),
            root,
            command_history=[str(time.time()) + ":create_study"],
        )

    @staticmethod
    def open(study_directory):
        """
        Load the study in study_directory if one was saved there, otherwise
        create a new one.
        """
        path = os.path.join(os.path.abspath(study_directory), STUDY_FILE)
        if os.path.exists(path):
            study = Study.load(path)
            for subdir in Study.subdirectories.values():
                os.makedirs(os.path.join(study.study_directory, subdir), exist_ok=True)
            return study
        return Study.create_study(study_directory)

    def path(self, kind, filename):
        """Absolute path for filename inside the subdirectory for kind."""
        return os.path.join(self.study_directory, self.subdirectories[kind], filename)

    def register_artifact(self, kind, path):
        """
        Record an output file. Paths are stored relative to the study directory;
        registering the same path twice keeps one entry.
        """
        relative = os.path.relpath(os.path.abspath(path), self.study_directory)
        entries = self.artifacts.setdefault(kind, [])
        if relative not in entries:
            entries.append(relative)
        return path

    def artifact_paths(self, kind):
        return [os.path.join(self.study_directory, p) for p in self.artifacts.get(kind, [])]

    def save(self):
        """
        This saves the study object as a JSON object inside the study directory.
        """
        save_path = os.path.join(self.study_directory, STUDY_FILE + ".tmp")
        try:
            with open(save_path, "w", encoding="utf-8") as save_filehandle:
                self.command_history.append(str(time.time()) + ":" + ";".join(sys.argv))
                json.dump(recursive_encoder(self.__dict__), save_filehandle, indent=4)
            file_operations["move"](save_path, save_path.replace(".tmp", ""))
        except Exception as e:
            print("Unable to save study!\n" + str(e))
            raise e

    @staticmethod
    def load(study_json_filepath):
        """
        Reconstitute the study object from a saved JSON file representing the object

        Args:
            study_json_filepath (str): path to the JSON file

        Returns:
            a study object
        """
        with open(study_json_filepath, encoding="utf-8") as json_filehandle:
            decoded_JSON = json.load(json_filehandle)
        return Study(
            decoded_JSON["study_name"],
            decoded_JSON["study_directory"],
            command_history=decoded_JSON["command_history"],
            artifacts=decoded_JSON["artifacts"],
            config=decoded_JSON.get("config"),
        )
